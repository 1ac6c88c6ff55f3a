// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tse/audio.hpp"
#include "tse/optim.hpp"
#include "tse/separator.hpp"
#include "tse/tensor.hpp"

namespace tse::train {

inline constexpr double kLossEps = 1e-8;

// Negative SI-SDR in dB with both signals centred. The ratio is guarded as
// P / (N + eps P) + eps, which stays finite at a perfect estimate and keeps
// exact scale invariance. Throws DataError for a silent target and
// DimensionError for a length mismatch.
ag::Tensor si_sdr_loss(std::span<const double> target, const ag::Tensor& estimate,
                       double eps = kLossEps);

struct PlateauConfig {
  std::size_t patience = 2;
  double factor = 0.5;
  std::size_t warm_epochs = 20;  // no decay while epoch <= warm_epochs
  double threshold = 1e-6;       // absolute improvement needed to reset
};

struct PlateauState {
  double lr = 1e-3;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  std::size_t decays = 0;
};

// Feeds one epoch's validation loss; returns true when the loss improved.
bool plateau_step(PlateauState& state, const PlateauConfig& config, std::size_t epoch,
                  double valid_loss);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 1;
  PlateauConfig plateau;
  std::size_t max_epochs = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  bool dynamic_mixing = false;
  std::size_t dm_examples = 0;  // per epoch; 0 = size of the fixed train set
  audio::SnrRange snr{0.0, 5.0};
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  bool verbose = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct TseExample {
  std::string id;
  audio::Waveform mixture;
  audio::Waveform target;
  std::vector<double> cue;
};

using CueFn = std::function<std::vector<double>(const audio::Waveform& enrollment)>;

struct TseData {
  std::vector<TseExample> train;
  std::vector<TseExample> valid;
  // Dynamic mixing draws from `pool` and computes cues through `cue`.
  const audio::UtterancePool* pool = nullptr;
  CueFn cue;
};

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;
  PlateauState plateau;
  std::vector<std::vector<double>> adam_m, adam_v;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
  double wall_s = 0.0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  std::vector<EpochLog> log;
  std::vector<std::vector<std::uint64_t>> mixture_hashes;  // per epoch
  TrainState state;
};

// Trains `model` in place for epochs state.epoch+1 .. max_epochs. Every
// epoch's example order (and dynamic-mixing draws) derives from (seed,
// epoch), so a run resumed from a saved state continues exactly like an
// unbroken one. With a checkpoint_dir, writes last.ckpt every epoch and
// best.ckpt on validation improvement; write failures are fatal.
TrainResult train_tse(sep::SeparatorModel& model, const TseData& data, const TrainConfig& config,
                      std::optional<TrainState> resume = std::nullopt);

// Mean validation loss (negative SI-SDR) of `examples`.
double evaluate_loss(const sep::SeparatorModel& model, const std::vector<TseExample>& examples);

void save_training_checkpoint(const std::filesystem::path& path, const sep::SeparatorModel& model,
                              const TrainState& state);
// Returns the model and, when present, the saved training state.
std::pair<sep::SeparatorModel, std::optional<TrainState>> load_training_checkpoint(
    const std::filesystem::path& path);

}  // namespace tse::train
