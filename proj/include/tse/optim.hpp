// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tse/params.hpp"

namespace tse::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient L2 norm; <= 0 disables clipping
};

// Adam with bias correction. Moments are kept per parameter in registration
// order so they can be checkpointed next to the weights.
class Adam {
 public:
  Adam(ag::ParameterSet& params, AdamConfig config = {});

  // Applies one update from the accumulated gradients (parameters without a
  // gradient count as zero). Returns the global gradient norm before
  // clipping. Throws NumericalError naming the first non-finite gradient.
  double step(double lr);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::size_t steps, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  ag::ParameterSet& params_;
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace tse::train
