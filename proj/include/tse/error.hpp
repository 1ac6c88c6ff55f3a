// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace tse {

/// Base class of every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// non-positive value, division by zero, too-short signal, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are well formed but unusable (too few speakers, overlapping
/// splits, silent signals).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: NaN gradients, failed factorizations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tse
