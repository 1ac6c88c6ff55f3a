// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Independent reference computations used to freeze expected values in
// tests. Nothing here calls into the code paths being checked.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "tse/metrics.hpp"

namespace tse::testing {

struct BrutePoint {
  double far, frr;
};

// Direct counting at every candidate threshold (each unique score and +inf),
// accepting trials with score >= threshold.
inline std::vector<BrutePoint> brute_force_points(const metrics::TrialScores& t) {
  std::set<double> thresholds(t.scores.begin(), t.scores.end());
  thresholds.insert(std::numeric_limits<double>::infinity());
  std::vector<BrutePoint> out;
  for (double th : thresholds) {
    double fa = 0, fr = 0, np = 0, nn = 0;
    for (std::size_t i = 0; i < t.scores.size(); ++i) {
      if (t.labels[i]) {
        ++np;
        if (t.scores[i] < th) ++fr;
      } else {
        ++nn;
        if (t.scores[i] >= th) ++fa;
      }
    }
    out.push_back({fa / nn, fr / np});
  }
  return out;
}

inline double brute_force_eer(const metrics::TrialScores& t) {
  auto pts = brute_force_points(t);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double a = pts[i - 1].frr - pts[i - 1].far;
    const double b = pts[i].frr - pts[i].far;
    if (b == 0.0) return pts[i].far;
    if (a < 0.0 && b > 0.0) {
      // Intersection of the segment with the FAR == FRR diagonal.
      const double w = a / (a - b);
      return pts[i - 1].far + w * (pts[i].far - pts[i - 1].far);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double brute_force_min_dcf(const metrics::TrialScores& t,
                                  const metrics::DcfParams& p) {
  double best = std::numeric_limits<double>::infinity();
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target));
  for (const auto& pt : brute_force_points(t)) {
    best = std::min(best, (p.c_miss * pt.frr * p.p_target +
                           p.c_fa * pt.far * (1 - p.p_target)) / norm);
  }
  return best;
}

}  // namespace tse::testing
