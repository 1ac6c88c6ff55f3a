// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tse::ag {

namespace {

std::vector<Tensor> fresh_leaves(const std::vector<Tensor>& inputs,
                                 bool requires_grad) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) {
    out.push_back(Tensor::from_data(t.shape(), t.to_vector(), requires_grad));
  }
  return out;
}

double eval(const LossFn& loss, const std::vector<Tensor>& leaves) {
  return loss(leaves).item();
}

}  // namespace

GradientComparison compare_gradients(const LossFn& loss,
                                     const std::vector<Tensor>& inputs,
                                     double step) {
  std::vector<double> analytic;
  {
    auto leaves = fresh_leaves(inputs, true);
    Tape tape;
    TapeScope scope(tape);
    auto value = loss(leaves);
    tape.backward(value);
    for (const auto& leaf : leaves) {
      if (leaf.has_grad()) {
        auto g = leaf.grad();
        analytic.insert(analytic.end(), g.begin(), g.end());
      } else {
        analytic.insert(analytic.end(), leaf.numel(), 0.0);
      }
    }
  }

  std::vector<double> numeric;
  auto leaves = fresh_leaves(inputs, false);
  for (auto& leaf : leaves) {
    auto values = leaf.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = eval(loss, leaves);
      values[i] = saved - step;
      const double down = eval(loss, leaves);
      values[i] = saved;
      numeric.push_back((up - down) / (2.0 * step));
    }
  }

  GradientComparison cmp;
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    cmp.analytic_norm += analytic[i] * analytic[i];
    cmp.numeric_norm += numeric[i] * numeric[i];
  }
  diff = std::sqrt(diff);
  cmp.analytic_norm = std::sqrt(cmp.analytic_norm);
  cmp.numeric_norm = std::sqrt(cmp.numeric_norm);
  const double denom = std::max({cmp.analytic_norm, cmp.numeric_norm, 1e-300});
  cmp.relative_error = diff == 0.0 ? 0.0 : diff / denom;
  return cmp;
}

Tensor random_projection(const Tensor& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> r(x.numel());
  for (auto& v : r) v = u(rng);
  return sum(mul(x, Tensor::from_data(x.shape(), std::move(r))));
}

}  // namespace tse::ag
