// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "tse/tensor.hpp"

namespace tse::ag::detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Tape holding the node that produced this tensor, if any.
  const Tape* tape = nullptr;
};

}  // namespace tse::ag::detail
