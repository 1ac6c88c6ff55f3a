// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "pipeline_impl.hpp"
#include "tse/error.hpp"

namespace tse::pipeline {

using nlohmann::json;
using namespace detail;

namespace {

std::vector<std::string> speaker_filter(const fs::path& manifest) {
  if (manifest.empty()) return {};
  return manifest_speakers(audio::read_manifest(manifest, audio::Split::kTrain));
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  return fs::path(file.string() + suffix);
}

// The binary archive carries speaker ids only; utterance ids and the
// embedding kind come from the JSON-lines mirror when it agrees, otherwise
// records are named by index.
std::vector<embed::Embedding> load_archive(const fs::path& path) {
  require_file(path, "--archive");
  auto out = embed::read_embeddings(path);
  if (out.empty()) throw DataError("empty archive " + path.string());
  std::vector<json> mirror;
  if (fs::is_regular_file(sibling(path, ".jsonl"))) mirror = read_jsonl(sibling(path, ".jsonl"));
  bool agrees = mirror.size() == out.size();
  for (std::size_t i = 0; agrees && i < out.size(); ++i)
    agrees = mirror[i].value("speaker", "") == out[i].speaker_id;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].utt_id = agrees ? mirror[i].value("utt", "") : "";
    if (out[i].utt_id.empty()) out[i].utt_id = "#" + std::to_string(i);
    out[i].kind = agrees ? mirror[i].value("kind", "embedding") : "embedding";
  }
  return out;
}

}  // namespace

json to_json(const TrainEmbedderOptions& o) {
  return {{"corpus", path_string(o.corpus)},
          {"speakers_from", path_string(o.speakers_from)},
          {"pooling", embed::to_string(o.model.pooling)},
          {"channels", o.model.channels},
          {"emb_dim", o.model.emb_dim},
          {"n_mels", o.model.frames.n_mels},
          {"win_ms", o.model.frames.win_ms},
          {"hop_ms", o.model.frames.hop_ms},
          {"epochs", o.train.epochs},
          {"lr", o.train.lr},
          {"batch", o.train.batch},
          {"valid_fraction", o.train.valid_fraction},
          {"seed", o.train.seed},
          {"out", path_string(o.out)}};
}

embed::EmbedderTrainResult run_train_embedder(const TrainEmbedderOptions& o) {
  const auto corpus = open_corpus(o.corpus);
  const auto speakers = speaker_filter(o.speakers_from);
  prepare_dir(o.out);
  const auto pool = audio::load_pool(corpus, speakers);
  std::vector<audio::PoolUtterance> utts;
  for (std::size_t i = 0; i < pool.size(); ++i) utts.push_back(pool.at(i));
  auto model_config = o.model;
  model_config.seed = o.train.seed;
  auto result = embed::train_embedder(utts, model_config, o.train);
  result.model.save(o.out / "embedder.ckpt");
  std::vector<json> log;
  for (const auto& e : result.log) log.push_back(embed::to_json(e));
  write_jsonl(o.out / "log.jsonl", log);
  auto report = report_header("train-embedder", to_json(o), o.train.seed);
  report["speakers"] = pool.speakers();
  report["utterances"] = utts.size();
  report["parameters"] = result.model.params().total_elements();
  if (!result.log.empty()) report["final"] = embed::to_json(result.log.back());
  write_json(o.out / "report.json", report);
  return result;
}

json to_json(const ExtractEmbeddingsOptions& o) {
  return {{"model", path_string(o.model)},
          {"corpus", path_string(o.corpus)},
          {"speakers_from", path_string(o.speakers_from)},
          {"out", path_string(o.out)}};
}

std::vector<embed::Embedding> run_extract_embeddings(const ExtractEmbeddingsOptions& o) {
  require_file(o.model, "--model");
  const auto model = embed::EmbedderModel::load(o.model);
  const auto corpus = open_corpus(o.corpus);
  const auto speakers = speaker_filter(o.speakers_from);
  prepare_parent(o.out);
  std::vector<embed::Embedding> out;
  for (const auto& u : corpus.utterances) {
    if (!speakers.empty() && !std::binary_search(speakers.begin(), speakers.end(), u.speaker))
      continue;
    auto e = embed::embed(model, audio::read_wav(u.path));
    e.speaker_id = u.speaker;
    e.utt_id = u.id;
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError("extract-embeddings: no utterances selected");
  embed::write_embeddings(o.out, out);
  auto report = report_header("extract-embeddings", to_json(o), model.config().seed);
  report["embeddings"] = out.size();
  report["kind"] = out.front().kind;
  report["dimension"] = out.front().vector.size();
  write_json(sibling(o.out, ".report.json"), report);
  return out;
}

std::vector<Trial> make_trials(const std::vector<embed::Embedding>& embeddings,
                               std::size_t per_speaker, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& e : embeddings) {
    if (e.speaker_id.empty() || e.utt_id.empty())
      throw DataError("trials need speaker and utterance ids on every embedding");
    by_speaker[e.speaker_id].push_back(e.utt_id);
  }
  if (by_speaker.size() < 2) throw DataError("trials need at least 2 speakers");
  if (per_speaker == 0) throw UsageError("trials per speaker must be positive");
  std::vector<std::string> speakers;
  for (const auto& [s, _] : by_speaker) speakers.push_back(s);

  std::mt19937_64 rng(seed);
  std::vector<Trial> trials;
  for (std::size_t si = 0; si < speakers.size(); ++si) {
    const auto& own = by_speaker[speakers[si]];
    if (own.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, own.size() - 1);
    std::uniform_int_distribution<std::size_t> other(0, speakers.size() - 2);
    for (std::size_t k = 0; k < per_speaker; ++k) {
      const std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      while (b == a) b = pick(rng);
      trials.push_back({own[a], own[b], true});
    }
    for (std::size_t k = 0; k < per_speaker; ++k) {
      std::size_t oi = other(rng);
      if (oi >= si) ++oi;
      const auto& theirs = by_speaker[speakers[oi]];
      std::uniform_int_distribution<std::size_t> pick_other(0, theirs.size() - 1);
      trials.push_back({own[pick(rng)], theirs[pick_other(rng)], false});
    }
  }
  if (trials.empty()) throw DataError("no speaker has 2 utterances; cannot form trials");
  return trials;
}

metrics::TrialScores score_trials(const std::vector<embed::Embedding>& embeddings,
                                  const std::vector<Trial>& trials) {
  std::map<std::string, const embed::Embedding*> by_utt;
  for (const auto& e : embeddings) by_utt[e.utt_id] = &e;
  metrics::TrialScores scores;
  for (const auto& t : trials) {
    auto a = by_utt.find(t.enroll_utt), b = by_utt.find(t.test_utt);
    if (a == by_utt.end() || b == by_utt.end())
      throw DataError("trial utterance missing from the archive: " +
                      (a == by_utt.end() ? t.enroll_utt : t.test_utt));
    scores.scores.push_back(embed::cosine(a->second->vector, b->second->vector));
    scores.labels.push_back(t.target);
  }
  return scores;
}

json to_json(const EvalEmbeddingsOptions& o) {
  std::vector<std::string> archives, ldas;
  for (const auto& p : o.archives) archives.push_back(path_string(p));
  for (const auto& p : o.ldas) ldas.push_back(path_string(p));
  return {{"archives", archives},
          {"ldas", ldas},
          {"trials_per_speaker", o.trials_per_speaker},
          {"p_target", o.dcf.p_target},
          {"c_miss", o.dcf.c_miss},
          {"c_fa", o.dcf.c_fa},
          {"seed", o.seed},
          {"out", path_string(o.out)}};
}

std::vector<EmbeddingRow> run_eval_embeddings(const EvalEmbeddingsOptions& o) {
  if (o.archives.empty()) throw UsageError("eval-embeddings: at least one --archive is required");
  std::vector<std::vector<embed::Embedding>> archives;
  for (const auto& p : o.archives) archives.push_back(load_archive(p));
  std::vector<lda::LdaTransform> ldas;
  for (const auto& p : o.ldas) {
    require_file(p, "--lda");
    ldas.push_back(lda::load_lda(p));
  }
  prepare_dir(o.out);
  const auto trials = make_trials(archives.front(), o.trials_per_speaker, o.seed);

  std::vector<EmbeddingRow> rows;
  auto add_row = [&](const std::vector<embed::Embedding>& emb, std::string name) {
    auto scores = score_trials(emb, trials);
    rows.push_back({std::move(name), emb.front().vector.size(), metrics::eer(scores),
                    metrics::min_dcf(scores, o.dcf)});
  };
  for (const auto& archive : archives) {
    add_row(archive, archive.front().kind);
    for (const auto& t : ldas) {
      if (t.dim_in() != archive.front().vector.size()) continue;
      std::vector<embed::Embedding> projected;
      for (const auto& e : archive) projected.push_back(lda::transform(t, e));
      add_row(projected, archive.front().kind + "+LDA");
    }
  }

  std::vector<json> trial_rows;
  for (const auto& t : trials)
    trial_rows.push_back({{"enroll", t.enroll_utt}, {"test", t.test_utt}, {"target", t.target}});
  write_jsonl(o.out / "trials.jsonl", trial_rows);
  std::size_t positives = 0;
  for (const auto& t : trials) positives += t.target ? 1 : 0;
  auto report = report_header("eval-embeddings", to_json(o), o.seed);
  report["trials"] = {{"target", positives}, {"nontarget", trials.size() - positives}};
  report["rows"] = json::array();
  for (const auto& r : rows)
    report["rows"].push_back({{"embedding", r.embedding},
                              {"dimension", r.dimension},
                              {"eer_percent", 100.0 * r.eer},
                              {"min_dcf", r.min_dcf}});
  write_json(o.out / "report.json", report);
  return rows;
}

std::string format_embedding_table(const std::vector<EmbeddingRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %9s %8s %8s\n", "embedding", "dimension", "EER(%)",
                "minDCF");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %9zu %8.2f %8.3f\n", r.embedding.c_str(), r.dimension,
                  100.0 * r.eer, r.min_dcf);
    os << line;
  }
  return os.str();
}

json to_json(const FitLdaOptions& o) {
  return {{"archive", path_string(o.archive)},
          {"dims", o.dims},
          {"shrinkage", o.shrinkage},
          {"out", path_string(o.out)}};
}

fs::path lda_path(const fs::path& out, std::size_t dim) {
  return out / ("lda_" + std::to_string(dim) + ".json");
}

std::vector<lda::LdaTransform> run_fit_lda(const FitLdaOptions& o) {
  if (o.dims.empty()) throw UsageError("fit-lda: --dims needs at least one value");
  const auto set = lda::from_embeddings(load_archive(o.archive));
  set.validate();
  const std::size_t m = set.num_classes();
  for (std::size_t l : o.dims) {
    if (l == 0 || l >= m)
      throw DomainError("fit-lda: dims " + std::to_string(l) + " must lie in [1, " +
                        std::to_string(m - 1) + "] for " + std::to_string(m) + " speakers");
  }
  prepare_dir(o.out);
  std::vector<lda::LdaTransform> out;
  json models = json::array();
  for (std::size_t l : o.dims) {
    auto t = lda::fit_lda(set, l, o.shrinkage);
    lda::save_lda(lda_path(o.out, l), t);
    double evr_sum = 0.0;
    for (double r : t.explained_variance_ratio) evr_sum += r;
    models.push_back({{"dims", l},
                      {"path", path_string(lda_path(o.out, l))},
                      {"eigenvalues", t.eigenvalues},
                      {"explained_variance_ratio", t.explained_variance_ratio},
                      {"explained_variance_sum", evr_sum}});
    out.push_back(std::move(t));
  }
  auto report = report_header("fit-lda", to_json(o), 0);
  report["classes"] = m;
  report["samples"] = set.vectors.size();
  report["dim_in"] = set.dim();
  report["models"] = models;
  write_json(o.out / "report.json", report);
  return out;
}

}  // namespace tse::pipeline
