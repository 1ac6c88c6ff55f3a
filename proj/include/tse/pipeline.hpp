// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tse/audio.hpp"
#include "tse/embedder.hpp"
#include "tse/lda.hpp"
#include "tse/metrics.hpp"
#include "tse/separator.hpp"
#include "tse/trainer.hpp"

// End-to-end pipeline stages. Every stage is a pure function of its options
// (including the seed); outputs are written under `out` and every report
// embeds the resolved options and the library version.
namespace tse::pipeline {

namespace fs = std::filesystem;

std::string version();

// {"command", "version", "seed", "config"}.
nlohmann::json report_header(const std::string& command, const nlohmann::json& config,
                             std::uint64_t seed);
void write_json(const fs::path& path, const nlohmann::json& j);
void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const fs::path& path);

// ---------------------------------------------------------------------------
// synth: clean synthetic corpus.

struct SynthOptions {
  std::size_t speakers = 8;
  std::size_t utts = 10;
  double duration_s = 2.0;
  std::uint64_t seed = 1;
  fs::path out;
};
nlohmann::json to_json(const SynthOptions& o);

// Writes out/wav/<spk>/<utt>.wav, out/corpus.jsonl and out/report.json.
audio::Corpus run_synth(const SynthOptions& o);

// ---------------------------------------------------------------------------
// mix: train/valid/test mixture manifests with speaker-disjoint splits.

struct MixOptions {
  fs::path corpus;  // corpus.jsonl or the directory holding it
  fs::path out;
  audio::SnrRange snr{0.0, 5.0};
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};  // of speakers
  std::array<std::size_t, 3> mixtures{100, 20, 20};   // per split
  // Explicit speaker lists override the ratios when all three are given.
  std::array<std::vector<std::string>, 3> speakers;
  std::uint64_t seed = 1;
};
nlohmann::json to_json(const MixOptions& o);

struct MixSummary {
  std::array<audio::Manifest, 3> manifests;  // train, valid, test
  std::array<std::vector<std::string>, 3> speakers;
};

// Writes out/{train,valid,test}.jsonl, the mixture/target WAVs under
// out/<split>/ and out/report.json.
MixSummary run_mix(const MixOptions& o);

// ---------------------------------------------------------------------------
// Speaker embeddings.

struct TrainEmbedderOptions {
  fs::path corpus;
  fs::path speakers_from;  // optional mixture manifest restricting speakers
  embed::EmbedderConfig model;
  embed::EmbedderTrainConfig train;
  fs::path out;
};
nlohmann::json to_json(const TrainEmbedderOptions& o);

// Writes out/embedder.ckpt, out/log.jsonl and out/report.json.
embed::EmbedderTrainResult run_train_embedder(const TrainEmbedderOptions& o);

struct ExtractEmbeddingsOptions {
  fs::path model;
  fs::path corpus;
  fs::path speakers_from;  // optional mixture manifest restricting speakers
  fs::path out;            // archive; also writes <out>.jsonl and <out>.report.json
};
nlohmann::json to_json(const ExtractEmbeddingsOptions& o);
std::vector<embed::Embedding> run_extract_embeddings(const ExtractEmbeddingsOptions& o);

struct Trial {
  std::string enroll_utt;
  std::string test_utt;
  bool target = false;
};

// For each speaker with >= 2 utterances: `per_speaker` same-speaker pairs and
// `per_speaker` pairs against other speakers, drawn from `seed`.
std::vector<Trial> make_trials(const std::vector<embed::Embedding>& embeddings,
                               std::size_t per_speaker, std::uint64_t seed);
metrics::TrialScores score_trials(const std::vector<embed::Embedding>& embeddings,
                                  const std::vector<Trial>& trials);

struct EvalEmbeddingsOptions {
  std::vector<fs::path> archives;
  std::vector<fs::path> ldas;  // applied to every archive of matching dimension
  std::size_t trials_per_speaker = 50;
  metrics::DcfParams dcf;
  std::uint64_t seed = 1;
  fs::path out;
};
nlohmann::json to_json(const EvalEmbeddingsOptions& o);

struct EmbeddingRow {
  std::string embedding;
  std::size_t dimension = 0;
  double eer = 0.0;  // fraction
  double min_dcf = 0.0;
};

// Writes out/trials.jsonl and out/report.json.
std::vector<EmbeddingRow> run_eval_embeddings(const EvalEmbeddingsOptions& o);
std::string format_embedding_table(const std::vector<EmbeddingRow>& rows);

// ---------------------------------------------------------------------------
// LDA.

struct FitLdaOptions {
  fs::path archive;
  std::vector<std::size_t> dims{32};
  double shrinkage = lda::kDefaultShrinkage;
  fs::path out;
};
nlohmann::json to_json(const FitLdaOptions& o);
fs::path lda_path(const fs::path& out, std::size_t dim);

// Writes out/lda_<l>.json per requested dimension and out/report.json.
std::vector<lda::LdaTransform> run_fit_lda(const FitLdaOptions& o);

// ---------------------------------------------------------------------------
// Target speaker extraction.

// Enrollment waveform -> cue, through an embedder and an optional LDA.
class CueSource {
 public:
  CueSource(embed::EmbedderModel embedder, std::optional<lda::LdaTransform> lda);
  static CueSource load(const fs::path& embedder, const fs::path& lda = {});

  std::vector<double> operator()(const audio::Waveform& enrollment) const;
  std::size_t dim() const;
  embed::Pooling pooling() const { return embedder_.config().pooling; }
  const std::optional<lda::LdaTransform>& lda() const { return lda_; }

 private:
  embed::EmbedderModel embedder_;
  std::optional<lda::LdaTransform> lda_;
};

// x-TSE, xi-TSE, x-LDA-TSE(l), xi-LDA-TSE(l); "+DM" appended for dynamic mixing.
std::string system_name(const CueSource& cue, bool dynamic_mixing);

std::vector<train::TseExample> load_examples(const audio::Manifest& m, const CueSource& cue);

struct TrainTseOptions {
  fs::path train_manifest;
  fs::path valid_manifest;  // optional
  fs::path corpus;          // clean pool for dynamic mixing
  fs::path embedder;
  fs::path lda;  // optional
  std::string cue;  // xvec|xivec; must match the embedder when given
  std::string preset = "desk";
  train::TrainConfig train;
  fs::path resume;  // optional training checkpoint
  fs::path out;
};
nlohmann::json to_json(const TrainTseOptions& o);

struct TrainTseSummary {
  std::string system;
  train::TrainResult result;
};

// Writes out/model.ckpt (final), out/last.ckpt, out/best.ckpt, out/log.jsonl
// and out/report.json.
TrainTseSummary run_train_tse(const TrainTseOptions& o);

struct EvalTseOptions {
  fs::path model;  // ignored with identity
  fs::path manifest;
  fs::path embedder;
  fs::path lda;
  bool identity = false;  // evaluate only the unprocessed mixture
  std::string system;     // row name override
  bool write_wavs = false;
  fs::path out;
};
nlohmann::json to_json(const EvalTseOptions& o);

struct SystemRow {
  std::string system;
  metrics::ExtractionReport report;
};

inline constexpr const char* kMixtureRow = "Mixture";
inline constexpr const char* kSdrDefinition =
    "energy-ratio SDR 10 log10(|s|^2 / |s - s_hat|^2), not the BSS-Eval filtered variant";

// Writes out/utterances.jsonl, out/report.json and, on request, out/wav/.
// Rows: the mixture (identity) row, then the evaluated system.
std::vector<SystemRow> run_eval_tse(const EvalTseOptions& o);
std::string format_tse_table(const std::vector<SystemRow>& rows);

}  // namespace tse::pipeline
