// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tse/audio.hpp"
#include "tse/error.hpp"

namespace tse::audio {

namespace {

constexpr int kHarmonics = 24;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double gaussian_bump(double f, double center, double width) {
  const double z = (f - center) / width;
  return std::exp(-0.5 * z * z);
}

}  // namespace

double power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

SyntheticSpeakerProfile make_speaker_profile(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticSpeakerProfile p;
  p.seed = seed;
  p.f0_hz = 85.0 + 170.0 * u(rng);
  p.vibrato_rate = 3.5 + 3.5 * u(rng);
  p.noise_floor = 0.002 + 0.008 * u(rng);
  // Spectral envelope: a tilt plus two formant-like resonances, sampled at
  // the speaker's own harmonic frequencies.
  const double tilt = 0.6 + 0.9 * u(rng);
  const double f1 = 300.0 + 600.0 * u(rng);
  const double f2 = 900.0 + 1600.0 * u(rng);
  const double bw1 = 80.0 + 120.0 * u(rng);
  const double bw2 = 120.0 + 200.0 * u(rng);
  p.harmonic_weights.resize(kHarmonics);
  for (int h = 1; h <= kHarmonics; ++h) {
    const double f = p.f0_hz * h;
    p.harmonic_weights[h - 1] = std::pow(h, -tilt) + 1.5 * gaussian_bump(f, f1, bw1) +
                                0.8 * gaussian_bump(f, f2, bw2);
  }
  const double total = std::accumulate(p.harmonic_weights.begin(),
                                       p.harmonic_weights.end(), 0.0);
  for (auto& w : p.harmonic_weights) w /= total;
  return p;
}

Waveform synth_speaker_utterance(const SyntheticSpeakerProfile& profile,
                                 double duration_s, std::uint64_t seed,
                                 int sample_rate) {
  if (!(duration_s > 0.0)) throw DomainError("synth: duration must be positive");
  if (!(profile.f0_hz > 0.0)) throw DomainError("synth: f0 must be positive");
  std::seed_seq seq{profile.seed, seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double sr = sample_rate;
  const std::size_t nh = profile.harmonic_weights.size();
  Waveform wav;
  wav.sample_rate = sample_rate;
  wav.samples.assign(n, 0.0);

  std::vector<double> harm_phase(nh);
  for (auto& ph : harm_phase) ph = kTwoPi * u(rng);
  std::vector<double> colour(nh, 1.0);
  double phase = 0.0;
  double vib_phase = kTwoPi * u(rng);
  double pitch = 1.0;

  std::size_t t = 0;
  while (t < n) {
    // Occasional pause between syllables.
    if (u(rng) < 0.15) {
      t += static_cast<std::size_t>((0.03 + 0.09 * u(rng)) * sr);
      continue;
    }
    const auto len = std::max<std::size_t>(
        8, static_cast<std::size_t>((0.08 + 0.17 * u(rng)) * sr));
    const double pitch_start = pitch;
    const double pitch_end = 0.85 + 0.33 * u(rng);
    const double amp = 0.5 + 0.5 * u(rng);
    for (std::size_t h = 0; h < nh; ++h) colour[h] = 0.6 + 0.8 * u(rng);
    for (std::size_t i = 0; i < len && t < n; ++i, ++t) {
      const double frac = static_cast<double>(i) / static_cast<double>(len);
      const double glide = pitch_start + (pitch_end - pitch_start) * frac;
      vib_phase += kTwoPi * profile.vibrato_rate / sr;
      const double f0 = profile.f0_hz * glide * (1.0 + 0.015 * std::sin(vib_phase));
      phase += kTwoPi * f0 / sr;
      if (phase > kTwoPi) phase -= kTwoPi;
      const double env = amp * std::sqrt(std::sin(std::numbers::pi * frac));
      double s = 0.0;
      for (std::size_t h = 0; h < nh; ++h) {
        const double hf = f0 * static_cast<double>(h + 1);
        if (hf >= 0.45 * sr) break;
        s += profile.harmonic_weights[h] * colour[h] *
             std::sin(static_cast<double>(h + 1) * phase + harm_phase[h]);
      }
      wav.samples[t] = env * s;
    }
    pitch = pitch_end;
  }
  for (auto& x : wav.samples) x += profile.noise_floor * gauss(rng);

  double peak = 0.0;
  for (double x : wav.samples) peak = std::max(peak, std::abs(x));
  if (peak > 0.0) {
    for (auto& x : wav.samples) x *= 0.7 / peak;
  }
  return wav;
}

}  // namespace tse::audio
