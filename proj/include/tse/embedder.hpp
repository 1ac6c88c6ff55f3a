// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Speaker embedders: log-mel front end, a small dilated TDNN frame encoder
// and either statistics pooling (x-vector) or Gaussian posterior pooling
// (xi-vector), trained as a speaker classifier.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tse/audio.hpp"
#include "tse/params.hpp"
#include "tse/tensor.hpp"

namespace tse::embed {

struct FrameConfig {
  double win_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 24;
};

inline constexpr double kLogFloor = 1e-10;

// Returns [T, n_mels] log mel energies computed from the magnitude spectrum
// of Hamming-windowed frames. T = floor((len - win) / hop) + 1.
// Throws DomainError when the waveform is shorter than one window.
ag::Tensor logmel(const audio::Waveform& wav, const FrameConfig& config = {});

// Triangular HTK-mel filterbank, [n_mels, n_fft/2 + 1], and the centre
// frequency of each band.
std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels,
                                                std::size_t n_fft,
                                                int sample_rate);
std::vector<double> mel_band_centers(std::size_t n_mels, int sample_rate);
std::size_t fft_size_for(std::size_t win);

// [T, D] -> [2D]: per-dimension mean then population std, sqrt(var + 1e-8).
// Throws DomainError when T < 2.
ag::Tensor stats_pool(const ag::Tensor& frames);

// Posterior mean of a per-dimension Gaussian with standard-normal prior:
// p_d = 1 + sum_t exp(lp[t,d]), phi_d = sum_t exp(lp[t,d]) z[t,d] / p_d.
ag::Tensor gaussian_posterior_pool(const ag::Tensor& z, const ag::Tensor& log_prec);

enum class Pooling { kStats, kGaussian };
std::string to_string(Pooling p);  // "xvec" / "xivec"
Pooling parse_pooling(const std::string& name);

struct EmbedderConfig {
  FrameConfig frames;
  Pooling pooling = Pooling::kGaussian;
  std::size_t channels = 64;
  std::size_t emb_dim = 32;
  std::uint64_t seed = 1;
};

struct Embedding {
  std::vector<double> vector;
  std::string kind;        // xvec, xivec, lda(l)
  std::string speaker_id;  // may be empty
  std::string utt_id;      // may be empty
};

class EmbedderModel {
 public:
  // Random initialization for a classifier over `speakers` (sorted labels).
  EmbedderModel(EmbedderConfig config, std::vector<std::string> speakers);

  const EmbedderConfig& config() const { return config_; }
  const std::vector<std::string>& speakers() const { return speakers_; }
  ag::ParameterSet& params() { return params_; }
  const ag::ParameterSet& params() const { return params_; }

  // Minimum number of feature frames accepted by the encoder.
  std::size_t min_frames() const;

  // Differentiable embedding [1, emb_dim] from log-mel features [T, F].
  ag::Tensor forward(const ag::Tensor& features) const;
  // Classifier logits [1, M] on top of an embedding.
  ag::Tensor classify(const ag::Tensor& embedding) const;

  void save(const std::filesystem::path& path) const;
  static EmbedderModel load(const std::filesystem::path& path);

 private:
  EmbedderConfig config_;
  std::vector<std::string> speakers_;
  ag::ParameterSet params_;
};

// Embedding of one waveform with the classifier head unused. Deterministic;
// safe to call concurrently on a frozen model.
Embedding embed(const EmbedderModel& model, const audio::Waveform& wav);

struct EmbedderTrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch = 8;  // utterances per update (gradient accumulation)
  double valid_fraction = 0.05;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct EmbedderEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> valid_accuracy;  // empty when nothing was held out
};

struct EmbedderTrainResult {
  EmbedderModel model;
  std::vector<EmbedderEpoch> log;
};

// Speaker classification with cross-entropy. Each speaker's utterances are
// split valid_fraction / rest (at least one held out once a speaker has
// three or more). Throws DataError with fewer than 2 speakers.
EmbedderTrainResult train_embedder(const std::vector<audio::PoolUtterance>& utts,
                                   const EmbedderConfig& config,
                                   const EmbedderTrainConfig& train);

nlohmann::json to_json(const EmbedderEpoch& e);

// Archive: "TSEEMB01", u32 count, u32 dim, then per record u16 id length,
// UTF-8 speaker id and dim float32 LE values. A JSON-lines mirror with the
// full records is written next to it (path + ".jsonl").
void write_embeddings(const std::filesystem::path& path,
                      const std::vector<Embedding>& embeddings);
std::vector<Embedding> read_embeddings(const std::filesystem::path& path);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace tse::embed
