// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "pipeline_impl.hpp"
#include "tse/error.hpp"

namespace tse::pipeline {

using nlohmann::json;
using namespace detail;

namespace {

constexpr std::array<audio::Split, 3> kSplits{audio::Split::kTrain, audio::Split::kValid,
                                              audio::Split::kTest};

std::string numbered(const std::string& prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + buf;
}

}  // namespace

json to_json(const SynthOptions& o) {
  return {{"speakers", o.speakers}, {"utts", o.utts},  {"duration_s", o.duration_s},
          {"seed", o.seed},         {"out", path_string(o.out)}};
}

audio::Corpus run_synth(const SynthOptions& o) {
  if (o.speakers < 2) throw UsageError("synth: need at least 2 speakers");
  if (o.utts < 2) throw UsageError("synth: need at least 2 utterances per speaker");
  if (!(o.duration_s > 0.0)) throw UsageError("synth: duration must be positive");
  prepare_dir(o.out);
  audio::Corpus corpus;
  corpus.dir = fs::absolute(o.out);
  json speakers = json::array();
  for (std::size_t s = 0; s < o.speakers; ++s) {
    const std::string spk = numbered("spk", s, 2);
    const auto profile = audio::make_speaker_profile(derive_seed({o.seed, s}));
    speakers.push_back({{"speaker", spk}, {"f0_hz", profile.f0_hz}});
    const fs::path dir = o.out / "wav" / spk;
    prepare_dir(dir);
    for (std::size_t u = 0; u < o.utts; ++u) {
      const std::string id = spk + numbered("_u", u, 2);
      auto wav = audio::synth_speaker_utterance(profile, o.duration_s,
                                                derive_seed({o.seed, s, u, 1}));
      const fs::path path = dir / (id + ".wav");
      audio::write_wav(path, wav);
      corpus.utterances.push_back({id, spk, fs::absolute(path)});
    }
  }
  audio::write_corpus(o.out / "corpus.jsonl", corpus);
  auto report = report_header("synth", to_json(o), o.seed);
  report["utterances"] = corpus.utterances.size();
  report["speakers"] = speakers;
  write_json(o.out / "report.json", report);
  return corpus;
}

json to_json(const MixOptions& o) {
  return {{"corpus", path_string(o.corpus)},
          {"out", path_string(o.out)},
          {"snr_min", o.snr.min_db},
          {"snr_max", o.snr.max_db},
          {"split_ratios", o.split_ratios},
          {"mixtures", o.mixtures},
          {"train_speakers", o.speakers[0]},
          {"valid_speakers", o.speakers[1]},
          {"test_speakers", o.speakers[2]},
          {"seed", o.seed}};
}

MixSummary run_mix(const MixOptions& o) {
  if (!(o.snr.min_db <= o.snr.max_db)) throw UsageError("mix: snr-min exceeds snr-max");
  const auto corpus = open_corpus(o.corpus);
  const auto all = corpus.speakers();
  MixSummary summary;

  const bool explicit_lists = std::any_of(o.speakers.begin(), o.speakers.end(),
                                          [](const auto& v) { return !v.empty(); });
  if (explicit_lists) {
    for (std::size_t sp = 0; sp < 3; ++sp) {
      for (const auto& s : o.speakers[sp]) {
        if (!std::binary_search(all.begin(), all.end(), s))
          throw DataError("mix: speaker '" + s + "' is not in the corpus");
      }
      summary.speakers[sp] = o.speakers[sp];
      std::sort(summary.speakers[sp].begin(), summary.speakers[sp].end());
    }
  } else {
    double total = 0.0;
    for (double r : o.split_ratios) {
      if (!(r >= 0.0 && r <= 1.0)) throw UsageError("mix: split ratios must lie in [0, 1]");
      total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("mix: split ratios must sum to 1");
    auto order = all;
    std::mt19937_64 rng(derive_seed({o.seed, 0x5eed}));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(order.size());
    const auto n_test = static_cast<std::size_t>(std::lround(o.split_ratios[2] * n));
    const auto n_valid = static_cast<std::size_t>(std::lround(o.split_ratios[1] * n));
    if (n_test + n_valid > order.size()) throw UsageError("mix: split ratios leave no speakers");
    const std::size_t n_train = order.size() - n_test - n_valid;
    auto begin = order.begin();
    for (std::size_t sp = 0; sp < 3; ++sp) {
      const std::size_t count = sp == 0 ? n_train : sp == 1 ? n_valid : n_test;
      summary.speakers[sp].assign(begin, begin + static_cast<std::ptrdiff_t>(count));
      std::sort(summary.speakers[sp].begin(), summary.speakers[sp].end());
      begin += static_cast<std::ptrdiff_t>(count);
    }
  }

  for (std::size_t sp = 0; sp < 2; ++sp) {
    for (const auto& s : summary.speakers[sp]) {
      if (std::binary_search(summary.speakers[2].begin(), summary.speakers[2].end(), s))
        throw DataError("mix: speaker '" + s + "' appears in both the " +
                        audio::to_string(kSplits[sp]) + " and test splits");
    }
  }

  std::map<std::string, fs::path> utt_path;
  for (const auto& u : corpus.utterances) utt_path[u.id] = u.path;

  prepare_dir(o.out);
  json splits = json::object();
  for (std::size_t sp = 0; sp < 3; ++sp) {
    auto& manifest = summary.manifests[sp];
    manifest.split = kSplits[sp];
    const std::string name = audio::to_string(kSplits[sp]);
    const std::size_t count = o.mixtures[sp];
    double lo = 0.0, hi = 0.0;
    if (count > 0) {
      const auto& spk = summary.speakers[sp];
      if (spk.size() < 2)
        throw DataError("mix: the " + name + " split needs at least 2 speakers, has " +
                        std::to_string(spk.size()));
      const auto pool = audio::load_pool(corpus, spk);
      prepare_dir(o.out / name / "mix");
      prepare_dir(o.out / name / "target");
      lo = o.snr.max_db;
      hi = o.snr.min_db;
      for (std::size_t i = 0; i < count; ++i) {
        std::mt19937_64 rng(derive_seed({o.seed, sp, i}));
        auto ex = audio::dynamic_mix(pool, rng, o.snr);
        const std::string id = numbered(name + "_", i, 5);
        audio::ManifestEntry e;
        e.mix = o.out / name / "mix" / (id + ".wav");
        e.target = o.out / name / "target" / (id + ".wav");
        e.enroll = utt_path.at(ex.enroll_utt);
        e.speaker = ex.target_speaker_id;
        e.interferer_speaker = ex.interferer_speaker_id;
        e.snr_db = ex.snr_db;
        audio::write_wav(e.mix, ex.mixture);
        audio::write_wav(e.target, ex.target);
        lo = std::min(lo, e.snr_db);
        hi = std::max(hi, e.snr_db);
        manifest.entries.push_back(std::move(e));
      }
    }
    audio::write_manifest(o.out / (name + ".jsonl"), manifest);
    splits[name] = {{"speakers", summary.speakers[sp]},
                    {"mixtures", count},
                    {"snr_db_min", lo},
                    {"snr_db_max", hi}};
  }
  audio::validate_speaker_disjoint(summary.manifests[0], summary.manifests[1],
                                   summary.manifests[2]);
  auto report = report_header("mix", to_json(o), o.seed);
  report["splits"] = splits;
  write_json(o.out / "report.json", report);
  return summary;
}

}  // namespace tse::pipeline
