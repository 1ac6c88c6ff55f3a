// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "tse/embedder.hpp"
#include "tse/error.hpp"
#include "tse/optim.hpp"

namespace tse::embed {

using ag::Tensor;

namespace {

struct Sample {
  Tensor features;
  std::size_t label;
};

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

nlohmann::json to_json(const EmbedderEpoch& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"train_accuracy", e.train_accuracy}};
  j["valid_accuracy"] = e.valid_accuracy ? nlohmann::json(*e.valid_accuracy) : nlohmann::json();
  return j;
}

EmbedderTrainResult train_embedder(const std::vector<audio::PoolUtterance>& utts,
                                   const EmbedderConfig& config,
                                   const EmbedderTrainConfig& train) {
  std::set<std::string> spk_set;
  for (const auto& u : utts) spk_set.insert(u.speaker);
  if (spk_set.size() < 2) {
    throw DataError("train_embedder: need at least 2 speakers, got " +
                    std::to_string(spk_set.size()));
  }
  if (train.batch == 0) throw DomainError("train_embedder: batch must be positive");
  std::vector<std::string> speakers(spk_set.begin(), spk_set.end());
  std::map<std::string, std::size_t> label_of;
  for (std::size_t i = 0; i < speakers.size(); ++i) label_of[speakers[i]] = i;

  EmbedderModel model(config, speakers);

  // Held-out split per speaker.
  std::map<std::string, std::vector<std::size_t>> by_spk;
  for (std::size_t i = 0; i < utts.size(); ++i) by_spk[utts[i].speaker].push_back(i);
  std::mt19937_64 split_rng(train.seed);
  std::vector<Sample> train_set, valid_set;
  for (auto& [spk, idx] : by_spk) {
    std::shuffle(idx.begin(), idx.end(), split_rng);
    std::size_t n_valid = 0;
    if (idx.size() >= 3) {
      n_valid = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(train.valid_fraction * idx.size())));
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& u = utts[idx[k]];
      Tensor f = logmel(u.wav, config.frames);
      if (f.dim(0) < model.min_frames()) {
        throw DataError("train_embedder: utterance '" + u.id + "' is too short");
      }
      (k < n_valid ? valid_set : train_set).push_back({std::move(f), label_of[spk]});
    }
  }

  train::Adam adam(model.params(), {});
  std::vector<EmbedderEpoch> log;
  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    std::seed_seq seq{train.seed, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_total = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch) {
      const std::size_t stop = std::min(order.size(), start + train.batch);
      model.params().zero_grad();
      ag::Tape tape;
      ag::TapeScope scope(tape);
      Tensor batch_loss;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train_set[order[k]];
        Tensor logits = model.classify(model.forward(s.features));
        const std::size_t label[] = {s.label};
        Tensor l = ag::cross_entropy(logits, label);
        loss_total += l.item();
        if (argmax(logits.data()) == s.label) ++correct;
        batch_loss = batch_loss.defined() ? ag::add(batch_loss, l) : l;
      }
      tape.backward(ag::scale(batch_loss, 1.0 / static_cast<double>(stop - start)));
      adam.step(train.lr);
    }

    EmbedderEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_total / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!valid_set.empty()) {
      ag::NoTapeScope no_tape;
      std::size_t ok = 0;
      for (const auto& s : valid_set) {
        if (argmax(model.classify(model.forward(s.features)).data()) == s.label) ++ok;
      }
      rec.valid_accuracy = static_cast<double>(ok) / static_cast<double>(valid_set.size());
    }
    if (train.verbose) std::cerr << to_json(rec).dump() << "\n";
    log.push_back(rec);
  }
  return {std::move(model), std::move(log)};
}

}  // namespace tse::embed
