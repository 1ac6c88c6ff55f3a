// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "tse/error.hpp"
#include "tse/tensor.hpp"

namespace tse::ag {

namespace {

using R = Recorder;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> view(double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

Eigen::Map<const RowMajor> cview(const double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

Shape broadcast_shape(const std::string& op, const Tensor& a,
                      const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  throw DimensionError(op + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are incompatible");
}

// f(x, y) -> value; dfx/dfy(x, y, out) -> partial derivatives.
template <class F, class DX, class DY>
Tensor binary(const std::string& op, const Tensor& a, const Tensor& b, F f,
              DX dfx, DY dfy) {
  Shape shape = broadcast_shape(op, a, b);
  const std::size_t n = shape_numel(shape);
  const bool sa = a.numel() != n;
  const bool sb = b.numel() != n;
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(ad[sa ? 0 : i], bd[sb ? 0 : i]);
  }
  return R::record(op, shape, std::move(out), {a, b}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto xa = a.data();
      auto xb = b.data();
      auto ga = R::grad_sink(a);
      auto gb = R::grad_sink(b);
      for (std::size_t i = 0; i < n; ++i) {
        double x = xa[sa ? 0 : i];
        double y = xb[sb ? 0 : i];
        if (!ga.empty()) ga[sa ? 0 : i] += g[i] * dfx(x, y);
        if (!gb.empty()) gb[sb ? 0 : i] += g[i] * dfy(x, y);
      }
    };
  });
}

// f(x) -> value; df(x, y) -> derivative given input and output.
template <class F, class DF>
Tensor unary(const std::string& op, const Tensor& x, F f, DF df) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  auto keep = out;
  return R::record(op, x.shape(), std::move(out), {x}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gx = R::grad_sink(x);
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * df(xv[i], keep[i]);
      }
    };
  });
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(op + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.data()) {
    if (y == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sum(const Tensor& x) {
  auto d = x.data();
  double s = std::accumulate(d.begin(), d.end(), 0.0);
  return R::record("sum", {}, {s}, {x}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      for (auto& v : R::grad_sink(x)) v += g[0];
    };
  });
}

Tensor mean(const Tensor& x) {
  auto d = x.data();
  const double n = static_cast<double>(d.size());
  double s = std::accumulate(d.begin(), d.end(), 0.0) / n;
  return R::record("mean", {}, {s}, {x}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      for (auto& v : R::grad_sink(x)) v += g[0] / n;
    };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> C(m * n);
  view(C.data(), m, n).noalias() = cview(a.data().data(), m, k) * cview(b.data().data(), k, n);
  return R::record("matmul", {m, n}, std::move(C), {a, b}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto G = cview(g.data(), m, n);
      if (auto ga = R::grad_sink(a); !ga.empty()) {
        view(ga.data(), m, k).noalias() += G * cview(b.data().data(), k, n).transpose();
      }
      if (auto gb = R::grad_sink(b); !gb.empty()) {
        view(gb.data(), k, n).noalias() += cview(a.data().data(), m, k).transpose() * G;
      }
    };
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  const bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                  a.dim(2) == (transpose_b ? b.dim(2) : b.dim(1));
  if (!ok) {
    throw DimensionError("bmm: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()) +
                         (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> C(nb * m * n);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t t = 0; t < nb; ++t) {
    auto At = cview(A + t * m * k, m, k);
    auto Ct = view(C.data() + t * m * n, m, n);
    if (transpose_b) {
      Ct.noalias() = At * cview(B + t * k * n, n, k).transpose();
    } else {
      Ct.noalias() = At * cview(B + t * k * n, k, n);
    }
  }
  return R::record("bmm", {nb, m, n}, std::move(C), {a, b}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      const double* A = a.data().data();
      const double* B = b.data().data();
      auto ga = R::grad_sink(a);
      auto gb = R::grad_sink(b);
      for (std::size_t t = 0; t < nb; ++t) {
        auto Gt = cview(g.data() + t * m * n, m, n);
        auto At = cview(A + t * m * k, m, k);
        if (transpose_b) {
          // C = A B^T with B [n, k]: dA = G B, dB = G^T A.
          auto Bt = cview(B + t * k * n, n, k);
          if (!ga.empty()) view(ga.data() + t * m * k, m, k).noalias() += Gt * Bt;
          if (!gb.empty()) view(gb.data() + t * k * n, n, k).noalias() += Gt.transpose() * At;
        } else {
          // C = A B with B [k, n]: dA = G B^T, dB = A^T G.
          auto Bt = cview(B + t * k * n, k, n);
          if (!ga.empty()) view(ga.data() + t * m * k, m, k).noalias() += Gt * Bt.transpose();
          if (!gb.empty()) view(gb.data() + t * k * n, k, n).noalias() += At.transpose() * Gt;
        }
      }
    };
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (x.rank() < 1 || v.rank() != 1 || x.shape().back() != v.dim(0)) {
    throw DimensionError("add_rowvec: cannot add " + shape_str(v.shape()) +
                         " to rows of " + shape_str(x.shape()));
  }
  const std::size_t d = v.dim(0);
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto vd = v.data();
  std::vector<double> out(xd.begin(), xd.end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += vd[j];
  }
  return R::record("add_rowvec", x.shape(), std::move(out), {x, v},
                   [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       if (auto gx = R::grad_sink(x); !gx.empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (auto gv = R::grad_sink(v); !gv.empty()) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j];
                         }
                       }
                     };
                   });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() == 2) return add_rowvec(matmul(x, weight), bias);
  if (x.rank() < 1) {
    throw DimensionError("linear: scalar input");
  }
  Shape out_shape = x.shape();
  const std::size_t in = out_shape.back();
  out_shape.back() = weight.rank() == 2 ? weight.dim(1) : 0;
  auto flat = reshape(x, {x.numel() / in, in});
  return reshape(add_rowvec(matmul(flat, weight), bias), out_shape);
}

Tensor softmax(const Tensor& x, int axis) {
  const auto& shape = x.shape();
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("softmax: axis out of range for " + shape_str(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t n = shape[axis];
  auto xd = x.data();
  std::vector<double> y(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xd[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double e = std::exp(xd[base + j * inner] - mx);
        y[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) y[base + j * inner] /= z;
    }
  }
  auto keep = y;
  return R::record("softmax", shape, std::move(y), {x}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gx = R::grad_sink(x);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dot += g[base + j * inner] * keep[base + j * inner];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += keep[idx] * (g[idx] - dot);
          }
        }
      }
    };
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != x.shape().back() || bias.dim(0) != x.shape().back()) {
    throw DimensionError("layernorm: input " + shape_str(x.shape()) +
                         " with gain " + shape_str(gain.shape()) +
                         " and bias " + shape_str(bias.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> xhat(xd.size()), inv(rows), y(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv[r];
      y[r * d + j] = gd[j] * xhat[r * d + j] + bd[j];
    }
  }
  return R::record(
      "layernorm", x.shape(), std::move(y), {x, gain, bias},
      [=, xhat = std::move(xhat), inv = std::move(inv)]() -> BackwardFn {
        return [=](std::span<const double> g) {
          auto gx = R::grad_sink(x);
          auto gg = R::grad_sink(gain);
          auto gb = R::grad_sink(bias);
          auto gd = gain.data();
          const double nd = static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * d;
            const double* xh = xhat.data() + r * d;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              if (!gg.empty()) gg[j] += gr[j] * xh[j];
              if (!gb.empty()) gb[j] += gr[j];
              const double dxh = gr[j] * gd[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            if (gx.empty()) continue;
            m1 /= nd;
            m2 /= nd;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gr[j] * gd[j];
              gx[r * d + j] += inv[r] * (dxh - m1 - xh[j] * m2);
            }
          }
        };
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  for (auto l : lab) {
    if (l >= m) {
      throw DimensionError("cross_entropy: label " + std::to_string(l) +
                           " out of range for " + std::to_string(m) + " classes");
    }
  }
  auto z = logits.data();
  std::vector<double> prob(n * m);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < m; ++j) prob[i * m + j] = std::exp(row[j] - lse);
    loss += lse - row[lab[i]];
  }
  loss /= static_cast<double>(n);
  return R::record("cross_entropy", {}, {loss}, {logits},
                   [=, prob = std::move(prob)]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto gz = R::grad_sink(logits);
                       const double s = g[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j) {
                           const double t = j == lab[i] ? 1.0 : 0.0;
                           gz[i * m + j] += s * (prob[i * m + j] - t);
                         }
                       }
                     };
                   });
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride,
              std::size_t dilation) {
  require_rank("conv1d", x, 2);
  require_rank("conv1d", kernels, 3);
  if (kernels.dim(1) != x.dim(0)) {
    throw DimensionError("conv1d: kernels " + shape_str(kernels.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  if (stride < 1 || dilation < 1) throw DomainError("conv1d: stride and dilation must be >= 1");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  const std::size_t span = dilation * (k - 1) + 1;
  if (len < span) {
    throw DomainError("conv1d: input length " + std::to_string(len) +
                      " is shorter than the kernel span " + std::to_string(span));
  }
  const std::size_t lout = (len - span) / stride + 1;
  auto X = x.data();
  auto W = kernels.data();
  std::vector<double> Y(cout * lout, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t c = 0; c < cin; ++c) {
      const double* w = W.data() + (o * cin + c) * k;
      const double* xr = X.data() + c * len;
      double* yr = Y.data() + o * lout;
      for (std::size_t t = 0; t < lout; ++t) {
        const double* xs = xr + t * stride;
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += w[j] * xs[j * dilation];
        yr[t] += s;
      }
    }
  }
  return R::record("conv1d", {cout, lout}, std::move(Y), {x, kernels},
                   [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto X = x.data();
                       auto W = kernels.data();
                       auto gx = R::grad_sink(x);
                       auto gw = R::grad_sink(kernels);
                       for (std::size_t o = 0; o < cout; ++o) {
                         const double* gr = g.data() + o * lout;
                         for (std::size_t c = 0; c < cin; ++c) {
                           const std::size_t wo = (o * cin + c) * k;
                           for (std::size_t t = 0; t < lout; ++t) {
                             const double gv = gr[t];
                             const std::size_t xo = c * len + t * stride;
                             for (std::size_t j = 0; j < k; ++j) {
                               if (!gx.empty()) gx[xo + j * dilation] += W[wo + j] * gv;
                               if (!gw.empty()) gw[wo + j] += X[xo + j * dilation] * gv;
                             }
                           }
                         }
                       }
                     };
                   });
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& kernels,
                        std::size_t stride) {
  require_rank("conv1d_transpose", x, 2);
  require_rank("conv1d_transpose", kernels, 3);
  if (kernels.dim(0) != x.dim(0)) {
    throw DimensionError("conv1d_transpose: kernels " +
                         shape_str(kernels.shape()) + " do not match input " +
                         shape_str(x.shape()));
  }
  if (stride < 1) throw DomainError("conv1d_transpose: stride must be >= 1");
  const std::size_t cin = x.dim(0), lin = x.dim(1);
  const std::size_t cout = kernels.dim(1), k = kernels.dim(2);
  if (lin < 1) throw DomainError("conv1d_transpose: empty input");
  const std::size_t lout = (lin - 1) * stride + k;
  auto X = x.data();
  auto W = kernels.data();
  std::vector<double> Y(cout * lout, 0.0);
  for (std::size_t o = 0; o < cin; ++o) {
    for (std::size_t c = 0; c < cout; ++c) {
      const double* w = W.data() + (o * cout + c) * k;
      double* yr = Y.data() + c * lout;
      for (std::size_t t = 0; t < lin; ++t) {
        const double xv = X[o * lin + t];
        double* ys = yr + t * stride;
        for (std::size_t j = 0; j < k; ++j) ys[j] += w[j] * xv;
      }
    }
  }
  return R::record("conv1d_transpose", {cout, lout}, std::move(Y),
                   {x, kernels}, [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto X = x.data();
                       auto W = kernels.data();
                       auto gx = R::grad_sink(x);
                       auto gw = R::grad_sink(kernels);
                       for (std::size_t o = 0; o < cin; ++o) {
                         for (std::size_t c = 0; c < cout; ++c) {
                           const std::size_t wo = (o * cout + c) * k;
                           const double* gr = g.data() + c * lout;
                           for (std::size_t t = 0; t < lin; ++t) {
                             const double* gs = gr + t * stride;
                             double s = 0.0;
                             for (std::size_t j = 0; j < k; ++j) {
                               s += W[wo + j] * gs[j];
                               if (!gw.empty()) gw[wo + j] += X[o * lin + t] * gs[j];
                             }
                             if (!gx.empty()) gx[o * lin + t] += s;
                           }
                         }
                       }
                     };
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  auto d = x.data();
  return R::record("reshape", std::move(shape), {d.begin(), d.end()}, {x},
                   [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto gx = R::grad_sink(x);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     };
                   });
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) {
    throw DimensionError("permute: " + std::to_string(axes.size()) +
                         " axes for shape " + shape_str(in_shape));
  }
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: invalid axis order");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    step[i] = in_stride[axes[i]];
  }
  // Source offset of every destination element, in destination order.
  const std::size_t n = x.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*source)[i] = off;
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < out_shape[a]) {
        off += step[a];
        break;
      }
      off -= step[a] * (out_shape[a] - 1);
      idx[a] = 0;
    }
  }
  auto d = x.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = d[(*source)[i]];
  return R::record("permute", out_shape, std::move(out), {x},
                   [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto gx = R::grad_sink(x);
                       for (std::size_t i = 0; i < n; ++i) gx[(*source)[i]] += g[i];
                     };
                   });
}

Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes) {
  return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  return permute(x, {1, 0});
}

Tensor resize_last(const Tensor& x, std::size_t length) {
  if (x.rank() < 1) throw DimensionError("resize_last: scalar input");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(len, 1);
  const std::size_t keep = std::min(len, length);
  Shape shape = x.shape();
  shape.back() = length;
  auto d = x.data();
  std::vector<double> out(rows * length, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(d.begin() + r * len, keep, out.begin() + r * length);
  }
  return R::record("resize_last", std::move(shape), std::move(out), {x},
                   [=]() -> BackwardFn {
                     return [=](std::span<const double> g) {
                       auto gx = R::grad_sink(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < keep; ++j) {
                           gx[r * len + j] += g[r * length + j];
                         }
                       }
                     };
                   });
}

}  // namespace tse::ag
