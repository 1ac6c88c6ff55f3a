// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tse/tensor.hpp"

namespace tse::ag {

// Ordered, named collection of trainable leaves. Order is registration order
// and is what checkpoints and optimizer state follow.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor value);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  // Overwrites values from `values`; names and shapes must match exactly.
  void assign(const std::map<std::string, Tensor>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

// Glorot-uniform initialization for a weight with the given fan-in/out.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

}  // namespace tse::ag
