// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Linear discriminant analysis on speaker embeddings.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tse/embedder.hpp"

namespace tse::lda {

// Dense row-major matrix; just enough linear algebra for LDA.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double trace() const;
};

struct LabeledSet {
  std::vector<std::vector<double>> vectors;
  std::vector<std::string> labels;

  // Throws DataError unless there are >= 2 classes, every class has >= 2
  // samples and all vectors share one nonzero dimension.
  void validate() const;
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
  std::size_t num_classes() const;
};

LabeledSet from_embeddings(const std::vector<embed::Embedding>& embeddings);

struct Scatter {
  Matrix within;   // sum_c sum_{x in c} (x - mu_c)(x - mu_c)^T
  Matrix between;  // sum_c n_c (mu_c - mu)(mu_c - mu)^T
  std::vector<double> mean;
};

Scatter scatter_matrices(const LabeledSet& set);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
// returned unsorted; column k of `vectors` pairs with values[k].
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymmetricEigen jacobi_eigen(const Matrix& a);

// Lower-triangular L with a = L L^T. Throws NumericalError if a is not
// positive definite.
Matrix cholesky(const Matrix& a);

inline constexpr double kDefaultShrinkage = 1e-4;
inline constexpr int kLdaVersion = 1;

struct LdaTransform {
  std::vector<double> global_mean;
  Matrix discriminants;  // [l, D]
  std::vector<double> eigenvalues;               // [l], non-increasing
  std::vector<double> explained_variance_ratio;  // [l]
  double shrinkage_eps = kDefaultShrinkage;

  std::size_t dim_in() const { return global_mean.size(); }
  std::size_t dim_out() const { return discriminants.rows; }
};

// Top-l discriminants of (S_w + eps tr(S_w)/D I)^-1 S_b. Explained variance
// ratios are normalized over the min(M-1, D) candidate eigenvalues.
LdaTransform fit_lda(const LabeledSet& set, std::size_t l,
                     double shrinkage_eps = kDefaultShrinkage);

// Keeps the first l discriminants of an already fitted transform.
LdaTransform truncate(const LdaTransform& t, std::size_t l);

std::vector<double> transform(const LdaTransform& t, std::span<const double> e);
embed::Embedding transform(const LdaTransform& t, const embed::Embedding& e);

// Between/within variance ratio of the set along direction d.
double fisher_ratio(const Scatter& s, std::span<const double> d);

void save_lda(const std::filesystem::path& path, const LdaTransform& t);
LdaTransform load_lda(const std::filesystem::path& path);

}  // namespace tse::lda
