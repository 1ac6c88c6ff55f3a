// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "tse/embedder.hpp"
#include "tse/error.hpp"

namespace tse::embed {

namespace {

// FFTW planning is not thread-safe; execution on private buffers is.
std::mutex g_plan_mutex;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_edges(std::size_t n_mels, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> hz(n_mels + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return hz;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::size_t fft_size_for(std::size_t win) {
  std::size_t n = 1;
  while (n < win) n <<= 1;
  return n;
}

std::vector<double> mel_band_centers(std::size_t n_mels, int sample_rate) {
  auto e = mel_edges(n_mels, sample_rate);
  return {e.begin() + 1, e.end() - 1};
}

std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels,
                                                std::size_t n_fft,
                                                int sample_rate) {
  const auto edges = mel_edges(n_mels, sample_rate);
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      if (f > lo && f <= mid) fb[m][k] = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) fb[m][k] = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

ag::Tensor logmel(const audio::Waveform& wav, const FrameConfig& config) {
  if (config.n_mels == 0) throw DomainError("logmel: n_mels must be positive");
  const auto win = static_cast<std::size_t>(std::lround(config.win_ms * wav.sample_rate / 1000.0));
  const auto hop = static_cast<std::size_t>(std::lround(config.hop_ms * wav.sample_rate / 1000.0));
  if (win == 0 || hop == 0) throw DomainError("logmel: window and hop must be positive");
  if (wav.size() < win) {
    throw DomainError("logmel: input too short (" + std::to_string(wav.size()) +
                      " samples, window is " + std::to_string(win) + ")");
  }
  const std::size_t frames = (wav.size() - win) / hop + 1;
  const std::size_t n_fft = fft_size_for(win);
  const std::size_t bins = n_fft / 2 + 1;
  const auto fb = mel_filterbank(config.n_mels, n_fft, wav.sample_rate);

  std::vector<double> window(win);
  for (std::size_t n = 0; n < win; ++n) {
    window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(win - 1));
  }

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(g_plan_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in.get(), out.get(), FFTW_ESTIMATE);
  }

  std::vector<double> result(frames * config.n_mels);
  std::vector<double> mag(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = wav.samples.data() + t * hop;
    for (std::size_t n = 0; n < n_fft; ++n) in.get()[n] = n < win ? x[n] * window[n] : 0.0;
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb[m][k] * mag[k];
      result[t * config.n_mels + m] = std::log(std::max(e, kLogFloor));
    }
  }
  {
    std::lock_guard lock(g_plan_mutex);
    fftw_destroy_plan(plan);
  }
  return ag::Tensor::from_data({frames, config.n_mels}, std::move(result));
}

}  // namespace tse::embed
