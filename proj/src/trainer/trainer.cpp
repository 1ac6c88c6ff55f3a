// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "tse/error.hpp"

namespace tse::train {

using ag::Tensor;

Tensor si_sdr_loss(std::span<const double> target, const Tensor& estimate, double eps) {
  if (estimate.rank() != 1 || estimate.numel() != target.size()) {
    throw DimensionError("si_sdr_loss: target has " + std::to_string(target.size()) +
                         " samples, estimate is " + ag::shape_str(estimate.shape()));
  }
  const std::size_t n = target.size();
  double mu = 0.0;
  for (double x : target) mu += x;
  mu /= static_cast<double>(n);
  std::vector<double> s(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = target[i] - mu;
    energy += s[i] * s[i];
  }
  if (!(energy > 0.0)) throw DataError("si_sdr_loss: silent target");
  Tensor ref = Tensor::from_data({n}, std::move(s));

  Tensor est = ag::sub(estimate, ag::mean(estimate));
  Tensor alpha = ag::scale(ag::sum(ag::mul(est, ref)), 1.0 / energy);
  Tensor proj = ag::mul(ref, alpha);
  Tensor noise = ag::sub(est, proj);
  Tensor p = ag::sum(ag::mul(proj, proj));
  Tensor q = ag::sum(ag::mul(noise, noise));
  Tensor ratio = ag::div(p, ag::add(q, ag::scale(p, eps)));
  Tensor guarded = ag::add(ratio, Tensor::scalar(eps));
  return ag::scale(ag::log(guarded), -10.0 / std::numbers::ln10);
}

bool plateau_step(PlateauState& state, const PlateauConfig& config, std::size_t epoch,
                  double valid_loss) {
  if (valid_loss < state.best - config.threshold) {
    state.best = valid_loss;
    state.since_improvement = 0;
    return true;
  }
  if (epoch <= config.warm_epochs) return false;
  if (++state.since_improvement >= config.patience) {
    state.lr *= config.factor;
    state.since_improvement = 0;
    ++state.decays;
  }
  return false;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("train: lr must be positive");
  if (batch == 0) throw DomainError("train: batch must be positive");
  if (plateau.patience < 1) throw DomainError("train: patience must be at least 1");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) {
    throw DomainError("train: lr factor must be in (0, 1)");
  }
  if (snr.min_db > snr.max_db) throw DomainError("train: snr range is inverted");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch", c.batch},
          {"patience", c.plateau.patience},
          {"lr_factor", c.plateau.factor},
          {"warm_epochs", c.plateau.warm_epochs},
          {"plateau_threshold", c.plateau.threshold},
          {"max_epochs", c.max_epochs},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"dynamic_mixing", c.dynamic_mixing},
          {"dm_examples", c.dm_examples},
          {"snr_min", c.snr.min_db},
          {"snr_max", c.snr.max_db}};
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"valid_loss", e.valid_loss},
          {"lr", e.lr},
          {"wall_s", e.wall_s}};
}

double evaluate_loss(const sep::SeparatorModel& model, const std::vector<TseExample>& examples) {
  ag::NoTapeScope no_tape;
  double total = 0.0;
  for (const auto& ex : examples) {
    Tensor est = model.forward(Tensor::from_data({ex.mixture.size()}, ex.mixture.samples), ex.cue);
    total += si_sdr_loss(ex.target.samples, est).item();
  }
  return total / static_cast<double>(examples.size());
}

namespace {

nlohmann::json state_header(const TrainState& s) {
  nlohmann::json j{{"epoch", s.epoch},
                   {"step", s.step},
                   {"lr", s.plateau.lr},
                   {"since_improvement", s.plateau.since_improvement},
                   {"decays", s.plateau.decays}};
  j["best"] = std::isfinite(s.plateau.best) ? nlohmann::json(s.plateau.best) : nlohmann::json();
  return j;
}

TseExample draw_example(const TseData& data, std::mt19937_64& rng, audio::SnrRange snr,
                        std::map<std::string, std::vector<double>>& cue_cache) {
  auto mix = audio::dynamic_mix(*data.pool, rng, snr);
  auto it = cue_cache.find(mix.enroll_utt);
  if (it == cue_cache.end()) it = cue_cache.emplace(mix.enroll_utt, data.cue(mix.enrollment)).first;
  return {mix.target_utt + "+" + mix.interferer_utt, std::move(mix.mixture), std::move(mix.target),
          it->second};
}

}  // namespace

void save_training_checkpoint(const std::filesystem::path& path, const sep::SeparatorModel& model,
                              const TrainState& state) {
  Checkpoint ckpt = model.to_checkpoint();
  ckpt.header["train_state"] = state_header(state);
  const auto& items = model.params().items();
  if (state.adam_m.size() == items.size() && state.adam_v.size() == items.size()) {
    for (std::size_t p = 0; p < items.size(); ++p) {
      ckpt.blobs.emplace_back("adam.m." + items[p].first,
                              Tensor::from_data({state.adam_m[p].size()}, state.adam_m[p]));
      ckpt.blobs.emplace_back("adam.v." + items[p].first,
                              Tensor::from_data({state.adam_v[p].size()}, state.adam_v[p]));
    }
  }
  save_checkpoint(path, ckpt);
}

std::pair<sep::SeparatorModel, std::optional<TrainState>> load_training_checkpoint(
    const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  auto model = sep::SeparatorModel::from_checkpoint(ckpt);
  if (!ckpt.header.contains("train_state")) return {std::move(model), std::nullopt};
  const auto& j = ckpt.header["train_state"];
  TrainState s;
  try {
    s.epoch = j.at("epoch").get<std::size_t>();
    s.step = j.at("step").get<std::size_t>();
    s.plateau.lr = j.at("lr").get<double>();
    s.plateau.since_improvement = j.at("since_improvement").get<std::size_t>();
    s.plateau.decays = j.at("decays").get<std::size_t>();
    if (!j.at("best").is_null()) s.plateau.best = j.at("best").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad train_state: " + e.what());
  }
  const auto blobs = ckpt.blob_map();
  for (const auto& [name, _] : model.params().items()) {
    auto m = blobs.find("adam.m." + name), v = blobs.find("adam.v." + name);
    if (m == blobs.end() || v == blobs.end()) {
      throw FormatError(path.string() + ": optimizer state missing for " + name);
    }
    s.adam_m.push_back(m->second.to_vector());
    s.adam_v.push_back(v->second.to_vector());
  }
  return {std::move(model), std::move(s)};
}

TrainResult train_tse(sep::SeparatorModel& model, const TseData& data, const TrainConfig& config,
                      std::optional<TrainState> resume) {
  config.validate();
  if (config.dynamic_mixing) {
    if (!data.pool || !data.cue) throw Error("train_tse: dynamic mixing needs a pool and a cue source");
  } else if (data.train.empty()) {
    throw DataError("train_tse: no training mixtures");
  }
  const std::size_t cue_dim = model.config().cue_dim;
  for (const auto* set : {&data.train, &data.valid}) {
    for (const auto& ex : *set) {
      if (ex.cue.size() != cue_dim) {
        throw DimensionError("train_tse: cue of '" + ex.id + "' has dim " +
                             std::to_string(ex.cue.size()) + ", model expects " +
                             std::to_string(cue_dim));
      }
    }
  }

  Adam adam(model.params(), {0.9, 0.999, 1e-8, config.clip_norm});
  TrainState state;
  state.plateau.lr = config.lr;
  if (resume) {
    state = *resume;
    adam.restore(state.step, state.adam_m, state.adam_v);
  }

  std::map<std::string, std::vector<double>> cue_cache;
  TrainResult result;
  for (std::size_t epoch = state.epoch + 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);

    std::vector<TseExample> drawn;
    std::vector<const TseExample*> order;
    if (config.dynamic_mixing) {
      const std::size_t n = config.dm_examples ? config.dm_examples : data.train.size();
      if (n == 0) throw DataError("train_tse: dynamic mixing with zero examples per epoch");
      for (std::size_t i = 0; i < n; ++i) drawn.push_back(draw_example(data, rng, config.snr, cue_cache));
      for (auto& ex : drawn) order.push_back(&ex);
    } else {
      for (auto& ex : data.train) order.push_back(&ex);
      std::shuffle(order.begin(), order.end(), rng);
    }

    std::vector<std::uint64_t> hashes;
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      model.params().zero_grad();
      ag::Tape tape;
      ag::TapeScope scope(tape);
      Tensor batch_loss;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ex = *order[k];
        hashes.push_back(audio::waveform_hash(ex.mixture));
        Tensor est = model.forward(Tensor::from_data({ex.mixture.size()}, ex.mixture.samples),
                                   ex.cue);
        Tensor l = si_sdr_loss(ex.target.samples, est);
        loss_total += l.item();
        batch_loss = batch_loss.defined() ? ag::add(batch_loss, l) : l;
      }
      tape.backward(ag::scale(batch_loss, 1.0 / static_cast<double>(stop - start)));
      adam.step(state.plateau.lr);
    }

    EpochLog rec;
    rec.epoch = epoch;
    rec.lr = state.plateau.lr;
    rec.train_loss = loss_total / static_cast<double>(order.size());
    rec.valid_loss = data.valid.empty() ? rec.train_loss : evaluate_loss(model, data.valid);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.valid_loss)) {
      throw NumericalError("train_tse: non-finite loss at epoch " + std::to_string(epoch));
    }
    const bool improved = plateau_step(state.plateau, config.plateau, epoch, rec.valid_loss);
    state.epoch = epoch;
    state.step = adam.steps();
    state.adam_m = adam.first_moments();
    state.adam_v = adam.second_moments();
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!config.checkpoint_dir.empty()) {
      std::filesystem::create_directories(config.checkpoint_dir);
      save_training_checkpoint(config.checkpoint_dir / "last.ckpt", model, state);
      if (improved) save_training_checkpoint(config.checkpoint_dir / "best.ckpt", model, state);
    }
    if (config.verbose) std::cerr << to_json(rec).dump() << "\n";
    result.log.push_back(rec);
    result.mixture_hashes.push_back(std::move(hashes));
  }
  result.state = std::move(state);
  return result;
}

}  // namespace tse::train
