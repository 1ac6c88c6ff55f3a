// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/optim.hpp"

#include <cmath>

#include "tse/error.hpp"

namespace tse::train {

Adam::Adam(ag::ParameterSet& params, AdamConfig config)
    : params_(params), config_(config) {
  for (const auto& [_, t] : params_.items()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

double Adam::step(double lr) {
  auto& items = params_.items();
  if (items.size() != m_.size()) throw Error("parameter set changed under Adam");

  double sq = 0.0;
  for (const auto& [name, t] : items) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter '" + name + "'");
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm)
                          ? config_.clip_norm / norm
                          : 1.0;

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < items.size(); ++p) {
    auto& t = items[p].second;
    auto w = t.mutable_data();
    const bool has = t.has_grad();
    auto g = has ? t.grad() : std::span<const double>{};
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] * clip : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
  return norm;
}

void Adam::restore(std::size_t steps, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw FormatError("optimizer state does not match the parameter set");
  }
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (m[p].size() != m_[p].size() || v[p].size() != v_[p].size()) {
      throw FormatError("optimizer moment size mismatch for '" +
                        params_.items()[p].first + "'");
    }
  }
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace tse::train
