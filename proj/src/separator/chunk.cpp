// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>

#include "tse/error.hpp"
#include "tse/separator.hpp"

namespace tse::sep {

using ag::BackwardFn;
using ag::Recorder;
using ag::Tensor;

ChunkLayout chunk_layout(std::size_t frames, std::size_t chunk_len, double overlap) {
  if (chunk_len < 2) throw DomainError("chunk: K must be at least 2");
  if (!(overlap > 0.0 && overlap < 1.0)) throw DomainError("chunk: overlap must be in (0, 1)");
  if (frames == 0) throw DomainError("chunk: no frames");
  ChunkLayout l;
  l.frames = frames;
  l.chunk_len = chunk_len;
  l.hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(chunk_len) * (1.0 - overlap))));
  if (frames <= chunk_len) {
    l.chunks = 1;
  } else {
    l.chunks = (frames - chunk_len + l.hop - 1) / l.hop + 1;
  }
  l.padding = (l.chunks - 1) * l.hop + chunk_len - frames;
  return l;
}

ChunkTensor chunk(const Tensor& h, std::size_t chunk_len, double overlap) {
  if (h.rank() != 2) throw DimensionError("chunk: expected [T, D], got " + ag::shape_str(h.shape()));
  const auto l = chunk_layout(h.dim(0), chunk_len, overlap);
  const std::size_t d = h.dim(1), k = l.chunk_len;
  auto x = h.data();
  std::vector<double> out(l.chunks * k * d, 0.0);
  for (std::size_t s = 0; s < l.chunks; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t t = s * l.hop + j;
      if (t >= l.frames) break;
      std::copy_n(x.begin() + t * d, d, out.begin() + (s * k + j) * d);
    }
  }
  Tensor data = Recorder::record("chunk", {1, l.chunks, k, d}, std::move(out), {h},
                                 [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gx = Recorder::grad_sink(h);
      for (std::size_t s = 0; s < l.chunks; ++s) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t t = s * l.hop + j;
          if (t >= l.frames) break;
          for (std::size_t i = 0; i < d; ++i) gx[t * d + i] += g[(s * k + j) * d + i];
        }
      }
    };
  });
  return {std::move(data), l};
}

Tensor overlap_add(const ChunkTensor& c) {
  const auto& l = c.layout;
  const auto& x = c.data;
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != l.chunks || x.dim(2) != l.chunk_len ||
      l.hop == 0 || (l.chunks - 1) * l.hop + l.chunk_len != l.frames + l.padding) {
    throw DimensionError("overlap_add: data " + ag::shape_str(x.shape()) +
                         " does not match the recorded chunk layout");
  }
  const std::size_t d = x.dim(3), k = l.chunk_len;
  std::vector<double> count(l.frames, 0.0);
  for (std::size_t s = 0; s < l.chunks; ++s)
    for (std::size_t j = 0; j < k && s * l.hop + j < l.frames; ++j) count[s * l.hop + j] += 1.0;
  auto xd = x.data();
  std::vector<double> out(l.frames * d, 0.0);
  for (std::size_t s = 0; s < l.chunks; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t t = s * l.hop + j;
      if (t >= l.frames) break;
      for (std::size_t i = 0; i < d; ++i) out[t * d + i] += xd[(s * k + j) * d + i];
    }
  }
  for (std::size_t t = 0; t < l.frames; ++t)
    for (std::size_t i = 0; i < d; ++i) out[t * d + i] /= count[t];
  return Recorder::record("overlap_add", {l.frames, d}, std::move(out), {x}, [=]() -> BackwardFn {
    return [=](std::span<const double> g) {
      auto gx = Recorder::grad_sink(x);
      for (std::size_t s = 0; s < l.chunks; ++s) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t t = s * l.hop + j;
          if (t >= l.frames) break;
          for (std::size_t i = 0; i < d; ++i) gx[(s * k + j) * d + i] += g[t * d + i] / count[t];
        }
      }
    };
  });
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  std::vector<double> pe(length * dim);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe[p * dim + i] = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return Tensor::from_data({length, dim}, std::move(pe));
}

}  // namespace tse::sep
