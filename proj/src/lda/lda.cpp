// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/lda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tse/error.hpp"

namespace tse::lda {

namespace {

// Solves L x = b in place (forward substitution).
void solve_lower(const Matrix& l, std::vector<double>& b) {
  for (std::size_t i = 0; i < l.rows; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
}

// Solves L^T x = b in place (back substitution).
void solve_upper_t(const Matrix& l, std::vector<double>& b) {
  for (std::size_t i = l.rows; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < l.rows; ++k) s -= l(k, i) * b[k];
    b[i] = s / l(i, i);
  }
}

}  // namespace

void LabeledSet::validate() const {
  if (vectors.size() != labels.size()) {
    throw DataError("lda: " + std::to_string(vectors.size()) + " vectors but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (vectors.empty() || vectors.front().empty()) throw DataError("lda: empty embedding set");
  const std::size_t d = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw DataError("lda: embeddings have mixed dimensions");
    for (double x : v) {
      if (!std::isfinite(x)) throw DataError("lda: non-finite embedding value");
    }
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  if (counts.size() < 2) throw DataError("lda: need at least 2 classes");
  for (const auto& [label, n] : counts) {
    if (n < 2) throw DataError("lda: class '" + label + "' has fewer than 2 samples");
  }
}

std::size_t LabeledSet::num_classes() const {
  return std::set<std::string>(labels.begin(), labels.end()).size();
}

LabeledSet from_embeddings(const std::vector<embed::Embedding>& embeddings) {
  LabeledSet s;
  for (const auto& e : embeddings) {
    s.vectors.push_back(e.vector);
    s.labels.push_back(e.speaker_id);
  }
  return s;
}

Scatter scatter_matrices(const LabeledSet& set) {
  set.validate();
  const std::size_t d = set.dim(), n = set.vectors.size();
  std::map<std::string, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n; ++i) classes[set.labels[i]].push_back(i);

  Scatter s{Matrix(d, d), Matrix(d, d), std::vector<double>(d, 0.0)};
  for (const auto& v : set.vectors)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += v[j];
  for (auto& m : s.mean) m /= static_cast<double>(n);

  std::vector<double> mu(d), diff(d);
  for (const auto& [_, idx] : classes) {
    std::fill(mu.begin(), mu.end(), 0.0);
    for (auto i : idx)
      for (std::size_t j = 0; j < d; ++j) mu[j] += set.vectors[i][j];
    for (auto& m : mu) m /= static_cast<double>(idx.size());
    for (auto i : idx) {
      for (std::size_t j = 0; j < d; ++j) diff[j] = set.vectors[i][j] - mu[j];
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) s.within(a, b) += diff[a] * diff[b];
    }
    const double nc = static_cast<double>(idx.size());
    for (std::size_t j = 0; j < d; ++j) diff[j] = mu[j] - s.mean[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) s.between(a, b) += nc * diff[a] * diff[b];
  }
  return s;
}

LdaTransform fit_lda(const LabeledSet& set, std::size_t l, double shrinkage_eps) {
  const Scatter s = scatter_matrices(set);
  const std::size_t d = set.dim();
  const std::size_t candidates = std::min(set.num_classes() - 1, d);
  if (l < 1 || l > candidates) {
    throw DomainError("lda: l=" + std::to_string(l) + " outside [1, " +
                      std::to_string(candidates) + "] (min(M-1, D))");
  }
  if (shrinkage_eps < 0.0) throw DomainError("lda: shrinkage_eps must be nonnegative");

  Matrix sw = s.within;
  const double ridge = shrinkage_eps * sw.trace() / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) sw(i, i) += ridge;
  const Matrix chol = cholesky(sw);

  // Whitened between-class scatter W = L^-1 S_b L^-T, built column by column.
  Matrix tmp(d, d);  // L^-1 S_b
  std::vector<double> col(d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) col[i] = s.between(i, j);
    solve_lower(chol, col);
    for (std::size_t i = 0; i < d; ++i) tmp(i, j) = col[i];
  }
  Matrix w(d, d);  // (L^-1 (L^-1 S_b)^T)^T, symmetric
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) col[j] = tmp(i, j);
    solve_lower(chol, col);
    for (std::size_t j = 0; j < d; ++j) w(i, j) = col[j];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) w(i, j) = w(j, i) = 0.5 * (w(i, j) + w(j, i));

  const auto eig = jacobi_eigen(w);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return eig.values[a] > eig.values[b];
  });
  double total = 0.0;
  for (std::size_t k = 0; k < candidates; ++k) total += eig.values[order[k]];
  if (!(total > 0.0)) throw NumericalError("lda: no between-class variance");

  LdaTransform t;
  t.global_mean = s.mean;
  t.shrinkage_eps = shrinkage_eps;
  t.discriminants = Matrix(l, d);
  for (std::size_t k = 0; k < l; ++k) {
    const std::size_t src = order[k];
    for (std::size_t i = 0; i < d; ++i) col[i] = eig.vectors(i, src);
    solve_upper_t(chol, col);
    std::size_t big = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(col[i]) > std::abs(col[big])) big = i;
    const double sign = col[big] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) t.discriminants(k, i) = sign * col[i];
    t.eigenvalues.push_back(eig.values[src]);
    t.explained_variance_ratio.push_back(eig.values[src] / total);
  }
  return t;
}

LdaTransform truncate(const LdaTransform& t, std::size_t l) {
  if (l < 1 || l > t.dim_out()) {
    throw DomainError("lda: cannot keep " + std::to_string(l) + " of " +
                      std::to_string(t.dim_out()) + " discriminants");
  }
  LdaTransform out = t;
  out.discriminants = Matrix(l, t.dim_in());
  std::copy_n(t.discriminants.data.begin(), l * t.dim_in(), out.discriminants.data.begin());
  out.eigenvalues.resize(l);
  out.explained_variance_ratio.resize(l);
  return out;
}

std::vector<double> transform(const LdaTransform& t, std::span<const double> e) {
  if (e.size() != t.dim_in()) {
    throw DimensionError("lda: embedding dim " + std::to_string(e.size()) +
                         ", transform expects " + std::to_string(t.dim_in()));
  }
  std::vector<double> out(t.dim_out(), 0.0);
  for (std::size_t k = 0; k < t.dim_out(); ++k)
    for (std::size_t i = 0; i < t.dim_in(); ++i)
      out[k] += t.discriminants(k, i) * (e[i] - t.global_mean[i]);
  return out;
}

embed::Embedding transform(const LdaTransform& t, const embed::Embedding& e) {
  return {transform(t, e.vector), "lda(" + std::to_string(t.dim_out()) + ")", e.speaker_id,
          e.utt_id};
}

double fisher_ratio(const Scatter& s, std::span<const double> d) {
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < d.size(); ++a) {
    for (std::size_t b = 0; b < d.size(); ++b) {
      num += d[a] * s.between(a, b) * d[b];
      den += d[a] * s.within(a, b) * d[b];
    }
  }
  return num / den;
}

void save_lda(const std::filesystem::path& path, const LdaTransform& t) {
  nlohmann::json j{{"version", kLdaVersion},
                   {"dim_in", t.dim_in()},
                   {"dim_out", t.dim_out()},
                   {"global_mean", t.global_mean},
                   {"discriminants", t.discriminants.data},
                   {"eigenvalues", t.eigenvalues},
                   {"explained_variance_ratio", t.explained_variance_ratio},
                   {"shrinkage_eps", t.shrinkage_eps}};
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

LdaTransform load_lda(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed LDA model: " + e.what());
  }
  try {
    if (j.at("version") != kLdaVersion) {
      throw FormatError(path.string() + ": unsupported LDA model version " + j.at("version").dump());
    }
    LdaTransform t;
    const auto din = j.at("dim_in").get<std::size_t>();
    const auto dout = j.at("dim_out").get<std::size_t>();
    t.global_mean = j.at("global_mean").get<std::vector<double>>();
    t.discriminants = Matrix(dout, din);
    t.discriminants.data = j.at("discriminants").get<std::vector<double>>();
    t.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    t.explained_variance_ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
    t.shrinkage_eps = j.at("shrinkage_eps").get<double>();
    if (t.global_mean.size() != din || t.discriminants.data.size() != din * dout ||
        t.eigenvalues.size() != dout || t.explained_variance_ratio.size() != dout) {
      throw FormatError(path.string() + ": LDA model fields are inconsistent (truncated?)");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad LDA model: " + e.what());
  }
}

}  // namespace tse::lda
