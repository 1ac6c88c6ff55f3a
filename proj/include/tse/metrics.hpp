// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tse::metrics {

// Sentinels for a zero residual (+inf) and a zero projection (-inf).
inline constexpr double kPerfect = std::numeric_limits<double>::infinity();
inline constexpr double kOrthogonal = -std::numeric_limits<double>::infinity();

// Scale-invariant SDR in dB. Both signals are zero-meaned first unless
// `zero_mean` is false.
double si_sdr(std::span<const double> reference, std::span<const double> estimate,
              bool zero_mean = true);
double si_sdr_improvement(std::span<const double> reference,
                          std::span<const double> estimate,
                          std::span<const double> mixture);

// Plain energy-ratio SDR, 10 log10(|s|^2 / |s - s_hat|^2). Not the BSS-Eval
// distortion-filter variant.
double sdr(std::span<const double> reference, std::span<const double> estimate);
double sdr_improvement(std::span<const double> reference,
                       std::span<const double> estimate,
                       std::span<const double> mixture);

struct TrialScores {
  std::vector<double> scores;
  std::vector<bool> labels;  // true = same-speaker (target) trial

  // Throws DataError unless lengths match and both classes are present.
  void validate() const;
};

// Detection operating point with acceptance rule `score >= threshold`.
struct OperatingPoint {
  double threshold;
  double false_accept;
  double false_reject;
};

// One point per unique score plus the reject-everything point (+inf),
// ordered by increasing threshold.
std::vector<OperatingPoint> operating_points(const TrialScores& trials);

// Rate where false accepts equal false rejects, linearly interpolated between
// the adjacent operating points that bracket the crossing.
double eer(const TrialScores& trials);

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Minimum over operating points of the detection cost normalized by the
// cost of the best trivial system.
double min_dcf(const TrialScores& trials, const DcfParams& params = {});

struct UtteranceScore {
  std::string id;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
  double sdr_db = 0.0;
  double sdri_db = 0.0;
};

struct MeanWithCount {
  double mean = 0.0;
  std::size_t count = 0;     // finite values averaged
  std::size_t excluded = 0;  // +-inf sentinels left out
};

struct ExtractionReport {
  std::vector<UtteranceScore> utterances;
  MeanWithCount si_sdr, si_sdri, sdr, sdri;
};

UtteranceScore score_utterance(std::string id, std::span<const double> reference,
                               std::span<const double> estimate,
                               std::span<const double> mixture);
ExtractionReport summarize(std::vector<UtteranceScore> utterances);
MeanWithCount finite_mean(std::span<const double> values);

}  // namespace tse::metrics
