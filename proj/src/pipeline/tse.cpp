// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>

#include "pipeline_impl.hpp"
#include "tse/error.hpp"

namespace tse::pipeline {

using nlohmann::json;
using namespace detail;

CueSource::CueSource(embed::EmbedderModel embedder, std::optional<lda::LdaTransform> lda)
    : embedder_(std::move(embedder)), lda_(std::move(lda)) {
  if (lda_ && lda_->dim_in() != embedder_.config().emb_dim)
    throw DimensionError("LDA input dimension " + std::to_string(lda_->dim_in()) +
                         " does not match the embedding dimension " +
                         std::to_string(embedder_.config().emb_dim));
}

CueSource CueSource::load(const fs::path& embedder, const fs::path& lda) {
  require_file(embedder, "--embedder");
  std::optional<lda::LdaTransform> t;
  if (!lda.empty()) {
    require_file(lda, "--lda");
    t = lda::load_lda(lda);
  }
  return CueSource(embed::EmbedderModel::load(embedder), std::move(t));
}

std::vector<double> CueSource::operator()(const audio::Waveform& enrollment) const {
  auto e = embed::embed(embedder_, enrollment).vector;
  return lda_ ? lda::transform(*lda_, e) : e;
}

std::size_t CueSource::dim() const {
  return lda_ ? lda_->dim_out() : embedder_.config().emb_dim;
}

std::string system_name(const CueSource& cue, bool dynamic_mixing) {
  std::string name = cue.pooling() == embed::Pooling::kStats ? "x" : "xi";
  name += cue.lda() ? "-LDA-TSE(" + std::to_string(cue.lda()->dim_out()) + ")" : "-TSE";
  return dynamic_mixing ? name + "+DM" : name;
}

std::vector<train::TseExample> load_examples(const audio::Manifest& m, const CueSource& cue) {
  std::map<fs::path, std::vector<double>> cues;
  std::vector<train::TseExample> out;
  for (const auto& e : m.entries) {
    auto it = cues.find(e.enroll);
    if (it == cues.end()) it = cues.emplace(e.enroll, cue(audio::read_wav(e.enroll))).first;
    out.push_back({e.mix.stem().string(), audio::read_wav(e.mix), audio::read_wav(e.target),
                   it->second});
  }
  return out;
}

json to_json(const TrainTseOptions& o) {
  return {{"train", path_string(o.train_manifest)},
          {"valid", path_string(o.valid_manifest)},
          {"corpus", path_string(o.corpus)},
          {"embedder", path_string(o.embedder)},
          {"lda", path_string(o.lda)},
          {"cue", o.cue},
          {"preset", o.preset},
          {"resume", path_string(o.resume)},
          {"out", path_string(o.out)},
          {"training", train::to_json(o.train)}};
}

TrainTseSummary run_train_tse(const TrainTseOptions& o) {
  const auto cue = CueSource::load(o.embedder, o.lda);
  if (!o.cue.empty() && embed::parse_pooling(o.cue) != cue.pooling())
    throw DataError("train-tse: --cue " + o.cue + " but the embedder produces " +
                    embed::to_string(cue.pooling()));
  o.train.validate();
  if (o.train_manifest.empty()) throw UsageError("train-tse: --train is required");
  const auto train_m = audio::read_manifest(o.train_manifest, audio::Split::kTrain);

  train::TseData data;
  data.train = load_examples(train_m, cue);
  if (!o.valid_manifest.empty())
    data.valid = load_examples(audio::read_manifest(o.valid_manifest, audio::Split::kValid), cue);
  std::unique_ptr<audio::UtterancePool> pool;
  if (o.train.dynamic_mixing) {
    if (o.corpus.empty()) throw UsageError("train-tse: --dynamic-mixing needs --corpus");
    pool = std::make_unique<audio::UtterancePool>(
        audio::load_pool(open_corpus(o.corpus), manifest_speakers(train_m)));
    data.pool = pool.get();
    data.cue = [&cue](const audio::Waveform& w) { return cue(w); };
  }

  std::optional<train::TrainState> state;
  auto model = [&] {
    if (o.resume.empty()) {
      auto c = sep::preset(o.preset, cue.dim());
      c.seed = o.train.seed;
      return sep::SeparatorModel(c);
    }
    require_file(o.resume, "--resume");
    auto [m, s] = train::load_training_checkpoint(o.resume);
    state = std::move(s);
    return std::move(m);
  }();
  if (model.config().cue_dim != cue.dim())
    throw DimensionError("train-tse: the separator expects " +
                         std::to_string(model.config().cue_dim) + "-D cues, the cue source gives " +
                         std::to_string(cue.dim()));

  prepare_dir(o.out);
  auto config = o.train;
  config.checkpoint_dir = o.out;
  TrainTseSummary summary{system_name(cue, config.dynamic_mixing),
                          train::train_tse(model, data, config, state)};
  model.save(o.out / "model.ckpt");

  std::vector<json> log;
  for (const auto& e : summary.result.log) log.push_back(train::to_json(e));
  write_jsonl(o.out / "log.jsonl", log);
  auto report = report_header("train-tse", to_json(o), o.train.seed);
  report["system"] = summary.system;
  report["separator"] = sep::to_json(model.config());
  report["parameters"] = model.params().total_elements();
  report["cue_dim"] = cue.dim();
  report["train_mixtures"] = data.train.size();
  report["valid_mixtures"] = data.valid.size();
  report["epochs"] = summary.result.state.epoch;
  report["steps"] = summary.result.state.step;
  report["lr_decays"] = summary.result.state.plateau.decays;
  const auto& best = summary.result.state.plateau.best;
  report["best_valid_loss"] = std::isfinite(best) ? json(best) : json(nullptr);
  if (!summary.result.log.empty()) {
    auto last = train::to_json(summary.result.log.back());
    last.erase("wall_s");
    report["final"] = last;
  }
  write_json(o.out / "report.json", report);
  return summary;
}

json to_json(const EvalTseOptions& o) {
  return {{"model", path_string(o.model)},       {"manifest", path_string(o.manifest)},
          {"embedder", path_string(o.embedder)}, {"lda", path_string(o.lda)},
          {"identity", o.identity},              {"system", o.system},
          {"write_wavs", o.write_wavs},          {"out", path_string(o.out)}};
}

namespace {

json mean_json(const metrics::MeanWithCount& m) {
  return {{"mean", m.mean}, {"count", m.count}, {"excluded", m.excluded}};
}

json utterance_json(const std::string& system, const metrics::UtteranceScore& u) {
  // Infinite sentinels serialize as null.
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"system", system},       {"id", u.id},         {"si_sdr", num(u.si_sdr_db)},
          {"si_sdri", num(u.si_sdri_db)}, {"sdr", num(u.sdr_db)}, {"sdri", num(u.sdri_db)}};
}

}  // namespace

std::vector<SystemRow> run_eval_tse(const EvalTseOptions& o) {
  if (o.manifest.empty()) throw UsageError("eval-tse: --manifest is required");
  const auto manifest = audio::read_manifest(o.manifest, audio::Split::kTest);
  if (manifest.entries.empty()) throw DataError("eval-tse: empty manifest");

  std::optional<sep::SeparatorModel> model;
  std::optional<CueSource> cue;
  if (!o.identity) {
    require_file(o.model, "--model");
    model = sep::SeparatorModel::load(o.model);
    cue = CueSource::load(o.embedder, o.lda);
    if (model->config().cue_dim != cue->dim())
      throw DimensionError("eval-tse: the separator expects " +
                           std::to_string(model->config().cue_dim) +
                           "-D cues, the cue source gives " + std::to_string(cue->dim()));
  }
  prepare_dir(o.out);
  if (o.write_wavs) prepare_dir(o.out / "wav");

  std::vector<metrics::UtteranceScore> mixture_scores, system_scores;
  std::map<fs::path, std::vector<double>> cues;
  for (const auto& e : manifest.entries) {
    const std::string id = e.mix.stem().string();
    const auto mix = audio::read_wav(e.mix);
    const auto target = audio::read_wav(e.target);
    mixture_scores.push_back(
        metrics::score_utterance(id, target.samples, mix.samples, mix.samples));
    if (!model) continue;
    auto it = cues.find(e.enroll);
    if (it == cues.end()) it = cues.emplace(e.enroll, (*cue)(audio::read_wav(e.enroll))).first;
    auto est = model->extract(mix, it->second);
    system_scores.push_back(
        metrics::score_utterance(id, target.samples, est.samples, mix.samples));
    if (o.write_wavs) {
      double peak = 0.0;
      for (double x : est.samples) peak = std::max(peak, std::abs(x));
      if (peak > 0.99)
        for (auto& x : est.samples) x *= 0.99 / peak;
      audio::write_wav(o.out / "wav" / (id + ".wav"), est);
    }
  }

  std::vector<SystemRow> rows;
  rows.push_back({kMixtureRow, metrics::summarize(mixture_scores)});
  if (model)
    rows.push_back({o.system.empty() ? system_name(*cue, false) : o.system,
                    metrics::summarize(system_scores)});

  std::vector<json> utts;
  for (const auto& r : rows)
    for (const auto& u : r.report.utterances) utts.push_back(utterance_json(r.system, u));
  write_jsonl(o.out / "utterances.jsonl", utts);
  auto report = report_header("eval-tse", to_json(o), 0);
  report["sdr_definition"] = kSdrDefinition;
  report["utterances"] = manifest.entries.size();
  report["rows"] = json::array();
  for (const auto& r : rows)
    report["rows"].push_back({{"system", r.system},
                              {"sdri", mean_json(r.report.sdri)},
                              {"si_sdri", mean_json(r.report.si_sdri)},
                              {"sdr", mean_json(r.report.sdr)},
                              {"si_sdr", mean_json(r.report.si_sdr)}});
  write_json(o.out / "report.json", report);
  return rows;
}

std::string format_tse_table(const std::vector<SystemRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %12s\n", "System", "SDRi(dB)", "SI-SDRi(dB)");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %10.3f %12.3f\n", r.system.c_str(),
                  r.report.sdri.mean, r.report.si_sdri.mean);
    os << line;
  }
  return os.str();
}

}  // namespace tse::pipeline
