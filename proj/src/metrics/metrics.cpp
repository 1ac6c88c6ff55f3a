// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tse/error.hpp"

namespace tse::metrics {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b,
                         const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

std::vector<double> centered(std::span<const double> x, bool zero_mean) {
  std::vector<double> v(x.begin(), x.end());
  if (zero_mean && !v.empty()) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) /
                     static_cast<double>(v.size());
    for (auto& e : v) e -= m;
  }
  return v;
}

double energy(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace

double si_sdr(std::span<const double> reference, std::span<const double> estimate,
              bool zero_mean) {
  require_same_length(reference, estimate, "si_sdr");
  const auto s = centered(reference, zero_mean);
  const auto e = centered(estimate, zero_mean);
  const double ss = energy(s);
  if (ss == 0.0) throw DataError("si_sdr: silent reference");
  double dot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) dot += e[i] * s[i];
  const double alpha = dot / ss;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = alpha * s[i];
    target += t * t;
    noise += (e[i] - t) * (e[i] - t);
  }
  if (noise == 0.0) return kPerfect;
  if (target == 0.0) return kOrthogonal;
  return 10.0 * std::log10(target / noise);
}

double si_sdr_improvement(std::span<const double> reference,
                          std::span<const double> estimate,
                          std::span<const double> mixture) {
  require_same_length(reference, mixture, "si_sdr_improvement");
  return si_sdr(reference, estimate) - si_sdr(reference, mixture);
}

double sdr(std::span<const double> reference, std::span<const double> estimate) {
  require_same_length(reference, estimate, "sdr");
  const double ss = energy(reference);
  if (ss == 0.0) throw DataError("sdr: silent reference");
  double noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - estimate[i];
    noise += d * d;
  }
  if (noise == 0.0) return kPerfect;
  return 10.0 * std::log10(ss / noise);
}

double sdr_improvement(std::span<const double> reference,
                       std::span<const double> estimate,
                       std::span<const double> mixture) {
  require_same_length(reference, mixture, "sdr_improvement");
  return sdr(reference, estimate) - sdr(reference, mixture);
}

void TrialScores::validate() const {
  if (scores.size() != labels.size()) {
    throw DataError("trial scores and labels differ in length");
  }
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0) throw DataError("trial list has no target trials");
  if (pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw DataError("trial list has no non-target trials");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw DataError("trial list contains a NaN score");
  }
}

std::vector<OperatingPoint> operating_points(const TrialScores& trials) {
  trials.validate();
  std::vector<std::size_t> order(trials.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trials.scores[a] < trials.scores[b];
  });
  const double n_pos = static_cast<double>(
      std::count(trials.labels.begin(), trials.labels.end(), true));
  const double n_neg = static_cast<double>(trials.labels.size()) - n_pos;

  std::vector<OperatingPoint> points;
  std::size_t below_pos = 0, below_neg = 0;  // trials with score < threshold
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = trials.scores[order[k]];
    points.push_back({t, (n_neg - below_neg) / n_neg, below_pos / n_pos});
    while (k < order.size() && trials.scores[order[k]] == t) {
      (trials.labels[order[k]] ? below_pos : below_neg)++;
      ++k;
    }
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

double eer(const TrialScores& trials) {
  const auto pts = operating_points(trials);
  // FRR - FAR rises from -1 at the lowest threshold to +1 at +inf.
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = pts[i].false_reject - pts[i].false_accept;
    if (d < 0.0) continue;
    if (d == 0.0) return pts[i].false_accept;
    const double d_prev = pts[i - 1].false_reject - pts[i - 1].false_accept;
    const double w = -d_prev / (d - d_prev);
    return pts[i - 1].false_accept +
           w * (pts[i].false_accept - pts[i - 1].false_accept);
  }
  return pts.back().false_accept;
}

double min_dcf(const TrialScores& trials, const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0)) {
    throw DomainError("min_dcf: p_target must lie in (0, 1)");
  }
  if (!(params.c_miss > 0.0 && params.c_fa > 0.0)) {
    throw DomainError("min_dcf: costs must be positive");
  }
  const double norm = std::min(params.c_miss * params.p_target,
                               params.c_fa * (1.0 - params.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : operating_points(trials)) {
    const double cost = params.c_miss * p.false_reject * params.p_target +
                        params.c_fa * p.false_accept * (1.0 - params.p_target);
    best = std::min(best, cost / norm);
  }
  return best;
}

UtteranceScore score_utterance(std::string id, std::span<const double> reference,
                               std::span<const double> estimate,
                               std::span<const double> mixture) {
  UtteranceScore u;
  u.id = std::move(id);
  u.si_sdr_db = si_sdr(reference, estimate);
  u.si_sdri_db = u.si_sdr_db - si_sdr(reference, mixture);
  u.sdr_db = sdr(reference, estimate);
  u.sdri_db = u.sdr_db - sdr(reference, mixture);
  // inf - inf from an estimate identical to the mixture that is itself
  // perfect: no improvement.
  if (std::isnan(u.si_sdri_db)) u.si_sdri_db = 0.0;
  if (std::isnan(u.sdri_db)) u.sdri_db = 0.0;
  return u;
}

MeanWithCount finite_mean(std::span<const double> values) {
  MeanWithCount m;
  double total = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      total += v;
      ++m.count;
    } else {
      ++m.excluded;
    }
  }
  m.mean = m.count ? total / static_cast<double>(m.count) : 0.0;
  return m;
}

ExtractionReport summarize(std::vector<UtteranceScore> utterances) {
  ExtractionReport r;
  r.utterances = std::move(utterances);
  std::vector<double> a, b, c, d;
  for (const auto& u : r.utterances) {
    a.push_back(u.si_sdr_db);
    b.push_back(u.si_sdri_db);
    c.push_back(u.sdr_db);
    d.push_back(u.sdri_db);
  }
  r.si_sdr = finite_mean(a);
  r.si_sdri = finite_mean(b);
  r.sdr = finite_mean(c);
  r.sdri = finite_mean(d);
  return r;
}

}  // namespace tse::metrics
