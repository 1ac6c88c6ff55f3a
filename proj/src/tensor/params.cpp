// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/params.hpp"

#include <algorithm>
#include <cmath>

#include "tse/error.hpp"

namespace tse::ag {

Tensor& ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(std::move(name), std::move(value));
  return items_.back().second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

void ParameterSet::assign(const std::map<std::string, Tensor>& values) {
  for (auto& [name, t] : items_) {
    auto it = values.find(name);
    if (it == values.end()) {
      throw FormatError("parameter '" + name + "' missing from stored values");
    }
    if (it->second.shape() != t.shape()) {
      throw FormatError("parameter '" + name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(t.shape()));
    }
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace tse::ag
