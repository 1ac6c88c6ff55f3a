// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tse::audio {

inline constexpr int kSampleRate = 8000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Mono 16-bit PCM RIFF/WAVE. Samples are scaled to [-1, 1).
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wav);

double power(std::span<const double> x);

// ---------------------------------------------------------------------------
// Synthetic speakers

struct SyntheticSpeakerProfile {
  double f0_hz = 120.0;
  std::vector<double> harmonic_weights;  // nonnegative, sums to 1
  double vibrato_rate = 5.0;             // Hz
  double noise_floor = 0.005;
  std::uint64_t seed = 0;
};

// Draws a speaker timbre (pitch, harmonic envelope, vibrato, noise) from
// `seed`.
SyntheticSpeakerProfile make_speaker_profile(std::uint64_t seed);

// Harmonic-plus-noise "speech": syllable-like segments with per-segment
// pitch glides, loudness envelopes and vowel colouring, separated by short
// pauses. Peak-normalized to 0.7.
Waveform synth_speaker_utterance(const SyntheticSpeakerProfile& profile,
                                 double duration_s, std::uint64_t seed,
                                 int sample_rate = kSampleRate);

// ---------------------------------------------------------------------------
// Mixing

struct MixResult {
  Waveform mixture;
  Waveform target;      // truncated and multiplied by peak_scale
  Waveform interferer;  // gain-adjusted, truncated, multiplied by peak_scale
  double snr_db = 0.0;
  double interferer_gain = 1.0;
  double peak_scale = 1.0;  // joint factor applied when |mixture| exceeded 1
};

// Scales the interferer so 10 log10(P(target)/P(interferer)) == snr_db over
// the common (min) length, then rescales all three signals jointly if the
// mixture peak exceeds 1.0.
MixResult mix_at_snr(const Waveform& target, const Waveform& interferer,
                     double snr_db);

// ---------------------------------------------------------------------------
// Corpora and manifests

struct Utterance {
  std::string id;
  std::string speaker;
  std::filesystem::path path;  // absolute after loading
};

// Clean single-speaker corpus, stored as JSON-lines {utt, speaker, path}.
struct Corpus {
  std::filesystem::path dir;
  std::vector<Utterance> utterances;

  std::vector<std::string> speakers() const;
  std::map<std::string, std::vector<const Utterance*>> by_speaker() const;
};

Corpus read_corpus(const std::filesystem::path& manifest_path);
void write_corpus(const std::filesystem::path& manifest_path,
                  const Corpus& corpus);

enum class Split { kTrain, kValid, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::filesystem::path mix;
  std::filesystem::path target;
  std::filesystem::path enroll;
  std::string speaker;
  double snr_db = 0.0;
  std::string interferer_speaker;  // optional, empty when unknown
};

// Mixture manifest, JSON-lines {mix, target, enroll, speaker, snr_db} with
// paths relative to the manifest directory.
struct Manifest {
  Split split = Split::kTrain;
  std::vector<ManifestEntry> entries;  // absolute paths after loading

  std::vector<std::string> speakers() const;
};

// Throws FormatError on malformed lines and DataError on missing files.
Manifest read_manifest(const std::filesystem::path& path, Split split);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// Train/valid target speakers must not appear among test speakers
// (targets or interferers).
void validate_speaker_disjoint(const Manifest& train, const Manifest& valid,
                               const Manifest& test);

// ---------------------------------------------------------------------------
// Dynamic mixing

struct PoolUtterance {
  std::string id;
  std::string speaker;
  Waveform wav;
};

class UtterancePool {
 public:
  // Requires >= 2 speakers with >= 2 utterances each.
  explicit UtterancePool(std::vector<PoolUtterance> utterances);

  const std::vector<std::string>& speakers() const { return speakers_; }
  const std::vector<std::size_t>& indices_of(const std::string& spk) const;
  const PoolUtterance& at(std::size_t i) const { return utts_.at(i); }
  std::size_t size() const { return utts_.size(); }

 private:
  std::vector<PoolUtterance> utts_;
  std::vector<std::string> speakers_;
  std::map<std::string, std::vector<std::size_t>> by_speaker_;
};

// Loads every corpus utterance whose speaker is in `speakers` (all when empty).
UtterancePool load_pool(const Corpus& corpus,
                        const std::vector<std::string>& speakers = {});

struct MixtureExample {
  Waveform mixture;
  Waveform target;
  Waveform interferer;
  Waveform enrollment;
  std::string target_speaker_id;
  std::string interferer_speaker_id;
  std::string target_utt;
  std::string interferer_utt;
  std::string enroll_utt;
  double snr_db = 0.0;
};

struct SnrRange {
  double min_db = 0.0;
  double max_db = 5.0;
};

// Draws a fresh (target speaker, interferer speaker, target utterance,
// enrollment utterance != target utterance, interferer utterance, SNR) tuple.
MixtureExample dynamic_mix(const UtterancePool& pool, std::mt19937_64& rng,
                           SnrRange snr = {});

// 64-bit FNV-1a over the mixture samples; used to detect repeated mixtures.
std::uint64_t waveform_hash(const Waveform& wav);

}  // namespace tse::audio
