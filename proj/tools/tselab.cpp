// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// tselab: single-binary front end for the extraction pipeline.

#include <malloc.h>

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "tse/error.hpp"
#include "tse/pipeline.hpp"
#include "tse/selftest.hpp"

namespace fs = std::filesystem;
namespace pl = tse::pipeline;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void print_suite(const char* title, const tse::selftest::SuiteReport& r) {
  std::printf("%s\n%-34s %9s %12s %10s  %s\n", title, "check", "instances", "worst", "bound",
              "status");
  for (const auto& c : r.checks)
    std::printf("%-34s %9zu %12.3e %10.1e  %s%s%s\n", c.name.c_str(), c.instances, c.value,
                c.threshold, c.passed ? "PASS" : "FAIL", c.detail.empty() ? "" : "  ",
                c.detail.c_str());
  std::printf("%zu checks, %zu failed, %.2f s\n", r.checks.size(), r.failures().size(), r.wall_s);
}

int report_failures(const char* cmd, const std::vector<tse::selftest::SuiteReport>& suites,
                    const fs::path& out, const nlohmann::json& config, std::uint64_t seed) {
  std::vector<std::string> failed;
  nlohmann::json report = pl::report_header(cmd, config, seed);
  report["checks"] = nlohmann::json::array();
  for (const auto& s : suites)
    for (const auto& c : s.checks) {
      report["checks"].push_back(tse::selftest::to_json(c));
      if (!c.passed) failed.push_back(c.name);
    }
  report["passed"] = failed.empty();
  if (!out.empty()) {
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    pl::write_json(out, report);
  }
  if (failed.empty()) return kOk;
  std::string names;
  for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
  std::cerr << cmd << ": FAILED: " << names << "\n";
  return kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  // Large tensors are allocated and freed every step; keep them in the heap
  // instead of paying for fresh mappings each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Target speaker extraction with LDA-transformed speaker cues"};
  app.set_version_flag("--version", pl::version());
  app.set_config("--config", "", "INI config file; [command] sections, flags override");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  // synth
  pl::SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic clean-speech corpus");
  c_synth->add_option("--speakers", synth.speakers, "Number of speakers")->capture_default_str();
  c_synth->add_option("--utts", synth.utts, "Utterances per speaker")->capture_default_str();
  c_synth->add_option("--dur", synth.duration_s, "Utterance duration (s)")->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  // mix
  pl::MixOptions mix;
  std::vector<double> ratios(mix.split_ratios.begin(), mix.split_ratios.end());
  std::vector<std::size_t> counts(mix.mixtures.begin(), mix.mixtures.end());
  auto* c_mix = app.add_subcommand("mix", "Build train/valid/test mixture manifests");
  c_mix->add_option("--corpus", mix.corpus, "corpus.jsonl or its directory")->required();
  c_mix->add_option("--out", mix.out, "Output directory")->required();
  c_mix->add_option("--snr-min", mix.snr.min_db)->capture_default_str();
  c_mix->add_option("--snr-max", mix.snr.max_db)->capture_default_str();
  c_mix->add_option("--split-ratios", ratios, "Speaker fractions train,valid,test")
      ->delimiter(',')
      ->expected(3);
  c_mix->add_option("--mixtures", counts, "Mixtures per split train,valid,test")
      ->delimiter(',')
      ->expected(3);
  c_mix->add_option("--train-speakers", mix.speakers[0], "Explicit speaker list")->delimiter(',');
  c_mix->add_option("--valid-speakers", mix.speakers[1], "Explicit speaker list")->delimiter(',');
  c_mix->add_option("--test-speakers", mix.speakers[2], "Explicit speaker list")->delimiter(',');
  c_mix->add_option("--seed", mix.seed)->capture_default_str();

  // train-embedder
  pl::TrainEmbedderOptions te;
  std::string te_pooling = "gaussian";
  auto* c_te = app.add_subcommand("train-embedder", "Train an x-vector or xi-vector embedder");
  c_te->add_option("--corpus", te.corpus)->required();
  c_te->add_option("--speakers-from", te.speakers_from, "Mixture manifest selecting speakers");
  c_te->add_option("--pooling", te_pooling, "stats (x-vector) | gaussian (xi-vector)")
      ->check(CLI::IsMember({"stats", "gaussian", "xvec", "xivec"}))
      ->capture_default_str();
  c_te->add_option("--channels", te.model.channels)->capture_default_str();
  c_te->add_option("--emb-dim", te.model.emb_dim)->capture_default_str();
  c_te->add_option("--n-mels", te.model.frames.n_mels)->capture_default_str();
  c_te->add_option("--epochs", te.train.epochs)->capture_default_str();
  c_te->add_option("--lr", te.train.lr)->capture_default_str();
  c_te->add_option("--batch", te.train.batch)->capture_default_str();
  c_te->add_option("--valid-fraction", te.train.valid_fraction)->capture_default_str();
  c_te->add_option("--seed", te.train.seed)->capture_default_str();
  c_te->add_flag("--verbose", te.train.verbose);
  c_te->add_option("--out", te.out, "Output directory")->required();

  // extract-embeddings
  pl::ExtractEmbeddingsOptions ee;
  auto* c_ee = app.add_subcommand("extract-embeddings", "Embed every corpus utterance");
  c_ee->add_option("--model", ee.model)->required();
  c_ee->add_option("--corpus", ee.corpus)->required();
  c_ee->add_option("--speakers-from", ee.speakers_from, "Mixture manifest selecting speakers");
  c_ee->add_option("--out", ee.out, "Archive path")->required();

  // eval-embeddings
  pl::EvalEmbeddingsOptions ev;
  auto* c_ev = app.add_subcommand("eval-embeddings", "EER and minDCF over cosine trials");
  c_ev->add_option("--archive", ev.archives, "Embedding archive (repeatable)")->required();
  c_ev->add_option("--lda", ev.ldas, "LDA model (repeatable)");
  c_ev->add_option("--trials-per-speaker", ev.trials_per_speaker)->capture_default_str();
  c_ev->add_option("--p-target", ev.dcf.p_target)->capture_default_str();
  c_ev->add_option("--c-miss", ev.dcf.c_miss)->capture_default_str();
  c_ev->add_option("--c-fa", ev.dcf.c_fa)->capture_default_str();
  c_ev->add_option("--seed", ev.seed)->capture_default_str();
  c_ev->add_option("--out", ev.out, "Output directory")->required();

  // fit-lda
  pl::FitLdaOptions fl;
  auto* c_fl = app.add_subcommand("fit-lda", "Fit LDA projections on a training archive");
  c_fl->add_option("--archive", fl.archive)->required();
  c_fl->add_option("--dims", fl.dims, "Output dimension(s), e.g. 8,16,32")
      ->delimiter(',')
      ->capture_default_str();
  c_fl->add_option("--shrinkage", fl.shrinkage)->capture_default_str();
  c_fl->add_option("--out", fl.out, "Output directory")->required();

  // train-tse
  pl::TrainTseOptions tt;
  auto* c_tt = app.add_subcommand("train-tse", "Train a target speaker extractor");
  c_tt->add_option("--train", tt.train_manifest)->required();
  c_tt->add_option("--valid", tt.valid_manifest);
  c_tt->add_option("--corpus", tt.corpus, "Clean corpus for dynamic mixing");
  c_tt->add_option("--embedder", tt.embedder)->required();
  c_tt->add_option("--lda", tt.lda);
  c_tt->add_option("--cue", tt.cue, "xvec | xivec (checked against the embedder)")
      ->check(CLI::IsMember({"xvec", "xivec"}));
  c_tt->add_option("--preset", tt.preset, "desk | paper")->capture_default_str();
  c_tt->add_option("--epochs", tt.train.max_epochs)->capture_default_str();
  c_tt->add_option("--lr", tt.train.lr)->capture_default_str();
  c_tt->add_option("--batch", tt.train.batch)->capture_default_str();
  c_tt->add_option("--patience", tt.train.plateau.patience)->capture_default_str();
  c_tt->add_option("--lr-factor", tt.train.plateau.factor)->capture_default_str();
  c_tt->add_option("--warm-epochs", tt.train.plateau.warm_epochs)->capture_default_str();
  c_tt->add_option("--clip", tt.train.clip_norm, "Global gradient norm; 0 disables")
      ->capture_default_str();
  c_tt->add_option("--seed", tt.train.seed)->capture_default_str();
  c_tt->add_flag("--dynamic-mixing", tt.train.dynamic_mixing);
  c_tt->add_option("--dm-examples", tt.train.dm_examples, "Mixtures per DM epoch")
      ->capture_default_str();
  c_tt->add_option("--snr-min", tt.train.snr.min_db)->capture_default_str();
  c_tt->add_option("--snr-max", tt.train.snr.max_db)->capture_default_str();
  c_tt->add_option("--resume", tt.resume, "Training checkpoint to continue from");
  c_tt->add_flag("--verbose", tt.train.verbose);
  c_tt->add_option("--out", tt.out, "Output directory")->required();

  // eval-tse
  pl::EvalTseOptions et;
  auto* c_et = app.add_subcommand("eval-tse", "SDRi / SI-SDRi of a trained extractor");
  c_et->add_option("--model", et.model);
  c_et->add_option("--manifest", et.manifest)->required();
  c_et->add_option("--embedder", et.embedder);
  c_et->add_option("--lda", et.lda);
  c_et->add_flag("--identity", et.identity, "Score only the unprocessed mixture");
  c_et->add_option("--system", et.system, "Row name override");
  c_et->add_flag("--write-wavs", et.write_wavs);
  c_et->add_option("--out", et.out, "Output directory")->required();

  // gradcheck / selftest
  tse::selftest::GradSuiteOptions gc;
  fs::path gc_out;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every op");
  c_gc->add_option("--instances", gc.instances)->capture_default_str();
  c_gc->add_option("--seed", gc.seed)->capture_default_str();
  c_gc->add_option("--out", gc_out, "Optional JSON report");
  c_gc->add_option("--inject-fault", gc.inject_fault)->group("");
  std::uint64_t st_seed = 2026;
  fs::path st_out;
  auto* c_st = app.add_subcommand("selftest", "Gradient suite plus structural invariants");
  c_st->add_option("--seed", st_seed)->capture_default_str();
  c_st->add_option("--out", st_out, "Optional JSON report");
  c_st->add_option("--inject-fault", gc.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_synth) {
      auto corpus = pl::run_synth(synth);
      std::printf("synth: %zu utterances from %zu speakers -> %s\n", corpus.utterances.size(),
                  corpus.speakers().size(), (synth.out / "corpus.jsonl").c_str());
    } else if (*c_mix) {
      std::copy(ratios.begin(), ratios.end(), mix.split_ratios.begin());
      std::copy(counts.begin(), counts.end(), mix.mixtures.begin());
      auto s = pl::run_mix(mix);
      for (std::size_t i = 0; i < 3; ++i)
        std::printf("%-5s %4zu mixtures, %zu speakers\n",
                    tse::audio::to_string(s.manifests[i].split).c_str(),
                    s.manifests[i].entries.size(), s.speakers[i].size());
    } else if (*c_te) {
      te.model.pooling = tse::embed::parse_pooling(te_pooling == "stats"      ? "xvec"
                                                   : te_pooling == "gaussian" ? "xivec"
                                                                              : te_pooling);
      auto r = pl::run_train_embedder(te);
      if (!r.log.empty()) {
        const auto& e = r.log.back();
        std::printf("train-embedder: %zu epochs, loss %.4f, train acc %.3f", e.epoch,
                    e.train_loss, e.train_accuracy);
        if (e.valid_accuracy) std::printf(", valid acc %.3f", *e.valid_accuracy);
        std::printf("\n");
      }
    } else if (*c_ee) {
      auto e = pl::run_extract_embeddings(ee);
      std::printf("extract-embeddings: %zu x %zu (%s) -> %s\n", e.size(),
                  e.front().vector.size(), e.front().kind.c_str(), ee.out.c_str());
    } else if (*c_ev) {
      std::cout << pl::format_embedding_table(pl::run_eval_embeddings(ev));
    } else if (*c_fl) {
      auto models = pl::run_fit_lda(fl);
      for (const auto& t : models) {
        double sum = 0.0;
        for (double r : t.explained_variance_ratio) sum += r;
        std::printf("lda %3zu dims: explained variance %.6f -> %s\n", t.dim_out(), sum,
                    pl::lda_path(fl.out, t.dim_out()).c_str());
      }
    } else if (*c_tt) {
      auto s = pl::run_train_tse(tt);
      const auto& log = s.result.log;
      std::printf("train-tse %s: %zu epochs", s.system.c_str(), s.result.state.epoch);
      if (!log.empty())
        std::printf(", train loss %.4f, valid loss %.4f, lr %.3g", log.back().train_loss,
                    log.back().valid_loss, log.back().lr);
      std::printf("\n");
    } else if (*c_et) {
      std::cout << pl::format_tse_table(pl::run_eval_tse(et));
    } else if (*c_gc) {
      auto r = tse::selftest::gradient_suite(gc);
      print_suite("gradient checks (central differences)", r);
      nlohmann::json cfg{{"instances", gc.instances}, {"seed", gc.seed}};
      return report_failures("gradcheck", {r}, gc_out, cfg, gc.seed);
    } else if (*c_st) {
      gc.seed = st_seed;
      auto g = tse::selftest::gradient_suite(gc);
      print_suite("gradient checks (central differences)", g);
      auto inv = tse::selftest::invariant_suite(st_seed);
      print_suite("structural invariants", inv);
      nlohmann::json cfg{{"instances", gc.instances}, {"seed", st_seed}};
      return report_failures("selftest", {g, inv}, st_out, cfg, st_seed);
    }
  } catch (const tse::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const tse::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const tse::DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
