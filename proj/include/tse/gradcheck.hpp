// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tse/tensor.hpp"

namespace tse::ag {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradientComparison {
  // ||analytic - numeric|| / max(||analytic||, ||numeric||), over all inputs.
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Compares reverse-mode gradients of the scalar `loss` against central
// differences. Inputs are copied; every input is treated as differentiable.
GradientComparison compare_gradients(const LossFn& loss,
                                     const std::vector<Tensor>& inputs,
                                     double step = 1e-5);

// sum(x * r) for a fixed pseudo-random r in [-1, 1]: a scalar probe that
// exercises the full vector-Jacobian product of x.
Tensor random_projection(const Tensor& x, std::uint64_t seed);

}  // namespace tse::ag
