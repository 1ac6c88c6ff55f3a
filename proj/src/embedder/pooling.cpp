// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>

#include "tse/embedder.hpp"
#include "tse/error.hpp"

namespace tse::embed {

using ag::BackwardFn;
using ag::Recorder;
using ag::Tensor;

namespace {
constexpr double kStdEps = 1e-8;
}

Tensor stats_pool(const Tensor& frames) {
  if (frames.rank() != 2) {
    throw DimensionError("stats_pool: expected [T, D], got " + ag::shape_str(frames.shape()));
  }
  const std::size_t t_len = frames.dim(0), d = frames.dim(1);
  if (t_len < 2) throw DomainError("stats_pool: need at least 2 frames, got " + std::to_string(t_len));
  auto x = frames.data();
  const double inv_t = 1.0 / static_cast<double>(t_len);
  std::vector<double> out(2 * d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < d; ++j) out[j] += x[t * d + j];
  for (std::size_t j = 0; j < d; ++j) out[j] *= inv_t;
  for (std::size_t j = 0; j < d; ++j) {
    double v = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double c = x[t * d + j] - out[j];
      v += c * c;
    }
    out[d + j] = std::sqrt(v * inv_t + kStdEps);
  }
  auto stats = out;
  return Recorder::record("stats_pool", {2 * d}, std::move(out), {frames}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gx = Recorder::grad_sink(frames);
      auto xv = frames.data();
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
          const double c = xv[t * d + j] - stats[j];
          gx[t * d + j] += g[j] * inv_t + g[d + j] * c * inv_t / stats[d + j];
        }
      }
    };
  });
}

Tensor gaussian_posterior_pool(const Tensor& z, const Tensor& log_prec) {
  if (z.rank() != 2 || z.shape() != log_prec.shape()) {
    throw DimensionError("gaussian_posterior_pool: z " + ag::shape_str(z.shape()) +
                         " and log_prec " + ag::shape_str(log_prec.shape()) +
                         " must be matching [T, D]");
  }
  const std::size_t t_len = z.dim(0), d = z.dim(1);
  auto zd = z.data();
  auto ld = log_prec.data();
  std::vector<double> prec(d, 1.0), phi(d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double w = std::exp(ld[t * d + j]);
      prec[j] += w;
      phi[j] += w * zd[t * d + j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) phi[j] /= prec[j];
  auto mean = phi;
  return Recorder::record("gaussian_posterior_pool", {d}, std::move(phi), {z, log_prec},
                          [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gz = Recorder::grad_sink(z);
      auto gl = Recorder::grad_sink(log_prec);
      auto zv = z.data();
      auto lv = log_prec.data();
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t i = t * d + j;
          const double w = std::exp(lv[i]) / prec[j];
          if (!gz.empty()) gz[i] += g[j] * w;
          if (!gl.empty()) gl[i] += g[j] * w * (zv[i] - mean[j]);
        }
      }
    };
  });
}

}  // namespace tse::embed
