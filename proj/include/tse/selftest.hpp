// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace tse::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed error (or count) for the check
  double threshold = 0.0;  // pass bound on `value`
  std::size_t instances = 0;
  std::string detail;
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  double wall_s = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
};

nlohmann::json to_json(const CheckResult& c);

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 2026;
  // Scales the backward pass of the named op by `fault_factor`; empty = off.
  std::string inject_fault;
  double fault_factor = 1.5;
};

// Central finite differences for every differentiable op, plus the composite
// pooling, loss, embedder and separator graphs.
SuiteReport gradient_suite(const GradSuiteOptions& options = {});

// Exact structural properties: chunk/overlap-add round trip, conv adjoint,
// pooling permutation invariance, fusion-site counts, cue ablation.
SuiteReport invariant_suite(std::uint64_t seed = 2026);

}  // namespace tse::selftest
