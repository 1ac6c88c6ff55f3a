// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <fstream>
#include <map>

#include "doctest.h"
#include "support/temp_dir.hpp"
#include "tse/error.hpp"
#include "tse/pipeline.hpp"
#include "tse/selftest.hpp"

using namespace tse::pipeline;
using tse::testing::TempDir;

namespace {

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) ++n;
  return n;
}

SynthOptions small_corpus(const fs::path& out, std::size_t speakers = 8, std::size_t utts = 4) {
  SynthOptions o;
  o.speakers = speakers;
  o.utts = utts;
  o.duration_s = 0.5;
  o.seed = 4;
  o.out = out;
  return o;
}

// Three tiny stages shared by several cases.
struct Staged {
  TempDir dir;
  fs::path embedder, lda3, train, test;

  Staged() {
    run_synth(small_corpus(dir / "corpus"));
    MixOptions mo;
    mo.corpus = dir / "corpus";
    mo.out = dir / "mix";
    mo.split_ratios = {0.5, 0.25, 0.25};
    mo.mixtures = {3, 2, 2};
    run_mix(mo);
    train = dir / "mix" / "train.jsonl";
    test = dir / "mix" / "test.jsonl";
    TrainEmbedderOptions te;
    te.corpus = dir / "corpus";
    te.speakers_from = train;
    te.model.channels = 8;
    te.model.emb_dim = 6;
    te.train.epochs = 2;
    te.out = dir / "emb";
    run_train_embedder(te);
    embedder = dir / "emb" / "embedder.ckpt";
    ExtractEmbeddingsOptions ee{embedder, dir / "corpus", train, dir / "train.emb"};
    run_extract_embeddings(ee);
    FitLdaOptions fl;
    fl.archive = dir / "train.emb";
    fl.dims = {3};
    fl.out = dir / "lda";
    run_fit_lda(fl);
    lda3 = lda_path(dir / "lda", 3);
  }
};

}  // namespace

TEST_CASE("synth writes one WAV per utterance and a corpus manifest") {
  TempDir dir;
  auto o = small_corpus(dir / "c", 8, 10);
  o.duration_s = 0.25;
  auto corpus = run_synth(o);
  CHECK(corpus.utterances.size() == 80);
  CHECK(count_files(dir / "c", ".wav") == 80);
  auto back = tse::audio::read_corpus(dir / "c" / "corpus.jsonl");
  CHECK(back.utterances.size() == 80);
  CHECK(back.speakers().size() == 8);
  auto report = nlohmann::json::parse(std::ifstream(dir / "c" / "report.json"));
  CHECK(report["version"] == version());
  CHECK(report["config"]["speakers"] == 8);
  o.speakers = 1;
  CHECK_THROWS_AS(run_synth(o), tse::UsageError);
}

TEST_CASE("mix keeps SNRs in range and test speakers disjoint") {
  TempDir dir;
  run_synth(small_corpus(dir / "c"));
  MixOptions mo;
  mo.corpus = dir / "c";
  mo.out = dir / "m";
  mo.split_ratios = {0.5, 0.25, 0.25};
  mo.mixtures = {10, 3, 3};
  auto s = run_mix(mo);
  for (const auto& m : s.manifests)
    for (const auto& e : m.entries) {
      CHECK(e.snr_db >= 0.0);
      CHECK(e.snr_db <= 5.0);
      CHECK(e.enroll != e.target);
    }
  auto train = tse::audio::read_manifest(dir / "m" / "train.jsonl", tse::audio::Split::kTrain);
  CHECK(train.entries.size() == 10);
  for (const auto& e : train.entries)
    for (const auto& t : s.speakers[2]) {
      CHECK(e.speaker != t);
      CHECK(e.interferer_speaker != t);
    }

  auto overlap = mo;
  overlap.out = dir / "m2";
  overlap.speakers = {{{"spk00", "spk01"}, {"spk02", "spk03"}, {"spk01", "spk04"}}};
  CHECK_THROWS_AS(run_mix(overlap), tse::DataError);
  auto ratios = mo;
  ratios.split_ratios = {0.6, 0.6, 0.1};
  CHECK_THROWS_AS(run_mix(ratios), tse::UsageError);
  auto tiny = mo;
  tiny.split_ratios = {0.75, 0.125, 0.125};  // one valid speaker
  CHECK_THROWS_AS(run_mix(tiny), tse::DataError);
}

TEST_CASE("trials are balanced and clustered embeddings score perfectly") {
  std::vector<tse::embed::Embedding> emb;
  for (int s = 0; s < 4; ++s)
    for (int u = 0; u < 5; ++u) {
      std::vector<double> v(4, 0.01 * u);
      v[s] = 1.0;
      emb.push_back({v, "xivec", "s" + std::to_string(s), "s" + std::to_string(s) + "u" +
                                                             std::to_string(u)});
    }
  auto trials = make_trials(emb, 7, 3);
  std::map<std::string, std::pair<int, int>> per;
  for (const auto& t : trials) {
    auto& c = per[t.enroll_utt.substr(0, 2)];
    (t.target ? c.first : c.second)++;
  }
  CHECK(per.size() == 4);
  for (const auto& [_, c] : per) CHECK(c == std::pair<int, int>{7, 7});
  auto scores = score_trials(emb, trials);
  CHECK(tse::metrics::eer(scores) == 0.0);

  TempDir dir;
  tse::embed::write_embeddings(dir / "a.emb", emb);
  EvalEmbeddingsOptions o;
  o.archives = {dir / "a.emb"};
  o.trials_per_speaker = 5;
  o.out = dir / "ev";
  auto rows = run_eval_embeddings(o);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].eer == 0.0);
  CHECK(rows[0].dimension == 4);
  CHECK(rows[0].embedding == "xivec");
  const auto table = format_embedding_table(rows);
  for (const char* col : {"embedding", "dimension", "EER(%)", "minDCF"})
    CHECK(table.find(col) != std::string::npos);
}

TEST_CASE("fit-lda sweep, full-rank ratios and range errors") {
  TempDir dir;
  std::vector<tse::embed::Embedding> emb;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int s = 0; s < 5; ++s)
    for (int u = 0; u < 6; ++u) {
      std::vector<double> v(6);
      for (auto& x : v) x = g(rng) + 3.0 * (s == u % 6);
      v[s] += 4.0;
      emb.push_back({v, "xvec", "s" + std::to_string(s), ""});
    }
  tse::embed::write_embeddings(dir / "t.emb", emb);
  FitLdaOptions o;
  o.archive = dir / "t.emb";
  o.dims = {1, 2, 4};
  o.out = dir / "lda";
  auto models = run_fit_lda(o);
  REQUIRE(models.size() == 3);
  for (std::size_t l : o.dims) CHECK(fs::exists(lda_path(o.out, l)));
  double sum = 0.0;
  for (double r : models.back().explained_variance_ratio) sum += r;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  o.dims = {5};
  CHECK_THROWS_AS(run_fit_lda(o), tse::DomainError);
}

TEST_CASE("system names follow the cue taxonomy") {
  Staged st;
  auto raw = CueSource::load(st.embedder);
  CHECK(system_name(raw, false) == "xi-TSE");
  CHECK(system_name(raw, true) == "xi-TSE+DM");
  auto with_lda = CueSource::load(st.embedder, st.lda3);
  CHECK(system_name(with_lda, false) == "xi-LDA-TSE(3)");
  CHECK(with_lda.dim() == 3);
  CHECK_THROWS_AS(CueSource::load(st.embedder, st.dir / "missing.json"), tse::DataError);

  TrainTseOptions tt;
  tt.train_manifest = st.train;
  tt.embedder = st.embedder;
  tt.lda = st.lda3;
  tt.train.max_epochs = 1;
  tt.out = st.dir / "tse";
  auto summary = run_train_tse(tt);
  CHECK(summary.system == "xi-LDA-TSE(3)");
  for (const char* f : {"model.ckpt", "last.ckpt", "best.ckpt", "log.jsonl", "report.json"})
    CHECK(fs::exists(tt.out / f));
  auto bad_cue = tt;
  bad_cue.cue = "xvec";
  CHECK_THROWS_AS(run_train_tse(bad_cue), tse::DataError);

  EvalTseOptions et;
  et.model = tt.out / "model.ckpt";
  et.manifest = st.test;
  et.embedder = st.embedder;
  et.lda = st.lda3;
  et.write_wavs = true;
  et.out = st.dir / "eval";
  auto rows = run_eval_tse(et);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].system == kMixtureRow);
  CHECK(std::abs(rows[0].report.si_sdri.mean) < 1e-9);
  CHECK(std::abs(rows[0].report.sdri.mean) < 1e-9);
  CHECK(rows[1].system == "xi-LDA-TSE(3)");
  CHECK(count_files(et.out / "wav", ".wav") == 2);
  // The separator was trained for 3-D cues.
  auto mismatch = et;
  mismatch.lda.clear();
  CHECK_THROWS_AS(run_eval_tse(mismatch), tse::DimensionError);
  auto identity = et;
  identity.identity = true;
  identity.model.clear();
  identity.out = st.dir / "identity";
  CHECK(run_eval_tse(identity).size() == 1);
}

TEST_CASE("gradient suite passes and names an injected fault") {
  tse::selftest::GradSuiteOptions o;
  o.instances = 3;
  auto clean = tse::selftest::gradient_suite(o);
  CHECK(clean.passed());
  o.inject_fault = "conv1d";
  auto bad = tse::selftest::gradient_suite(o);
  auto failed = bad.failures();
  CHECK(std::find(failed.begin(), failed.end(), "conv1d") != failed.end());
  CHECK(tse::selftest::invariant_suite().passed());
}
