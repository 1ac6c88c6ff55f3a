// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Dual-path transformer target speaker extractor: conv encoder, chunked
// Intra/Inter transformer blocks whose first layer fuses the speaker cue by
// multi-head cross attention, a single mask head and a transposed-conv
// decoder.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tse/audio.hpp"
#include "tse/checkpoint.hpp"
#include "tse/params.hpp"
#include "tse/tensor.hpp"

namespace tse::sep {

enum class MaskActivation { kRelu, kSigmoid };

struct SeparatorConfig {
  std::size_t enc_kernel = 16;
  std::size_t enc_stride = 8;
  std::size_t feature_dim = 16;  // D
  std::size_t chunk_len = 8;     // K
  double chunk_overlap = 0.5;
  std::size_t n_blocks = 1;  // N
  std::size_t n_ca = 1;      // cross-attention (fusion) layers per transformer
  std::size_t n_sa = 3;      // self-attention layers per transformer
  std::size_t n_heads = 2;
  std::size_t ff_dim = 64;
  std::size_t cue_dim = 32;
  MaskActivation mask = MaskActivation::kRelu;
  bool normalize_cue = false;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t hop() const;
};

SeparatorConfig desk_preset(std::size_t cue_dim);
SeparatorConfig paper_preset(std::size_t cue_dim);
SeparatorConfig preset(const std::string& name, std::size_t cue_dim);

nlohmann::json to_json(const SeparatorConfig& c);
SeparatorConfig config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Chunking

struct ChunkLayout {
  std::size_t frames = 0;  // T before padding
  std::size_t chunk_len = 0;
  std::size_t hop = 0;
  std::size_t chunks = 0;  // S
  std::size_t padding = 0;
};

ChunkLayout chunk_layout(std::size_t frames, std::size_t chunk_len, double overlap);

struct ChunkTensor {
  ag::Tensor data;  // [1, S, K, D]
  ChunkLayout layout;
};

// [T, D] -> [1, S, K, D], zero-padding the tail so every frame is covered.
ChunkTensor chunk(const ag::Tensor& h, std::size_t chunk_len, double overlap);
// Sums overlapping frames, divides by the per-frame cover count and drops
// the padding. Throws DimensionError when data and layout disagree.
ag::Tensor overlap_add(const ChunkTensor& c);

// Sinusoidal positional encoding [length, dim].
ag::Tensor positional_encoding(std::size_t length, std::size_t dim);

// ---------------------------------------------------------------------------
// Model

struct ForwardTrace {
  std::size_t fusion_calls = 0;
  std::vector<ag::Shape> intra_inputs;  // [n, K, D] per Intra transformer
  std::vector<ag::Shape> inter_inputs;  // [n, S, D] per Inter transformer
};

class SeparatorModel {
 public:
  explicit SeparatorModel(SeparatorConfig config);

  const SeparatorConfig& config() const { return config_; }
  ag::ParameterSet& params() { return params_; }
  const ag::ParameterSet& params() const { return params_; }

  // wav[L] -> h[T, D], T = (L - 16) / 8 + 1. DomainError when L < kernel.
  ag::Tensor encode(const ag::Tensor& wav) const;
  // h[T, D] -> mask[T, D]. A missing cue runs every fusion layer as plain
  // self-attention (the cue-free dual-path separator).
  ag::Tensor mask(const ag::Tensor& h, const std::optional<ag::Tensor>& cue,
                  ForwardTrace* trace = nullptr) const;
  // (h * m)[T, D] -> waveform [length], trimmed or zero-padded from (T-1)8+16.
  ag::Tensor decode(const ag::Tensor& hm, std::size_t length) const;

  // One multi-head cross-attention fusion over x[n, L, D] with a projected
  // cue E[1, D]; exposed for tests.
  ag::Tensor mhca_fuse(const ag::Tensor& x, const std::optional<ag::Tensor>& cue_proj,
                       const std::string& prefix) const;
  // Cue vector -> [1, D] through the shared projection (validates cue_dim).
  ag::Tensor project_cue(std::span<const double> cue) const;

  // Differentiable end-to-end extraction: mixture[L] -> estimate[L].
  ag::Tensor forward(const ag::Tensor& mixture, std::optional<std::span<const double>> cue,
                     ForwardTrace* trace = nullptr) const;

  // Tape-free extraction; safe to call concurrently on a frozen model.
  audio::Waveform extract(const audio::Waveform& mixture, std::span<const double> cue) const;

  // Names of the cue-side projection parameters (zeroing them reduces the
  // model to the cue-free separator).
  std::vector<std::string> cue_parameter_names() const;

  Checkpoint to_checkpoint() const;
  static SeparatorModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static SeparatorModel load(const std::filesystem::path& path);

 private:
  ag::Tensor attention(const ag::Tensor& q, const ag::Tensor& k, const ag::Tensor& v) const;
  ag::Tensor transformer(const ag::Tensor& x, const std::optional<ag::Tensor>& cue_proj,
                         const std::string& prefix, ForwardTrace* trace) const;
  ag::Tensor self_attention_layer(const ag::Tensor& x, const std::string& prefix) const;
  ag::Tensor feed_forward(const ag::Tensor& x, const std::string& prefix) const;

  SeparatorConfig config_;
  ag::ParameterSet params_;
};

}  // namespace tse::sep
