// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <random>

#include "tse/checkpoint.hpp"
#include "tse/embedder.hpp"
#include "tse/error.hpp"

namespace tse::embed {

using ag::Tensor;

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kDilations[] = {1, 2, 3};
constexpr int kFormatVersion = 1;

std::string layer(const char* what, std::size_t l) {
  return std::string(what) + std::to_string(l);
}

// Per-band mean removal over time.
Tensor normalize_features(const Tensor& features) {
  const std::size_t t_len = features.dim(0), f = features.dim(1);
  auto x = features.data();
  std::vector<double> mu(f, 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < f; ++j) mu[j] += x[t * f + j];
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < f; ++j) out[t * f + j] -= mu[j] / static_cast<double>(t_len);
  return Tensor::from_data({t_len, f}, std::move(out));
}

}  // namespace

std::string to_string(Pooling p) { return p == Pooling::kStats ? "xvec" : "xivec"; }

Pooling parse_pooling(const std::string& name) {
  if (name == "xvec" || name == "stats") return Pooling::kStats;
  if (name == "xivec" || name == "gaussian") return Pooling::kGaussian;
  throw UsageError("unknown pooling '" + name + "' (expected xvec or xivec)");
}

EmbedderModel::EmbedderModel(EmbedderConfig config, std::vector<std::string> speakers)
    : config_(config), speakers_(std::move(speakers)) {
  if (speakers_.size() < 2) throw DataError("embedder needs at least 2 speakers");
  if (config_.channels == 0 || config_.emb_dim == 0) {
    throw DomainError("embedder channels and emb_dim must be positive");
  }
  std::mt19937_64 rng(config_.seed);
  const std::size_t c = config_.channels;
  std::size_t in = config_.frames.n_mels;
  for (std::size_t l = 0; l < std::size(kDilations); ++l) {
    params_.add(layer("conv", l) + ".w",
                ag::glorot_uniform({c, in, kKernel}, in * kKernel, c * kKernel, rng));
    params_.add(layer("norm", l) + ".g", Tensor::full({c}, 1.0));
    params_.add(layer("norm", l) + ".b", Tensor::zeros({c}));
    in = c;
  }
  std::size_t pooled = 2 * c;
  if (config_.pooling == Pooling::kGaussian) {
    params_.add("head.z.w", ag::glorot_uniform({c, c}, c, c, rng));
    params_.add("head.z.b", Tensor::zeros({c}));
    params_.add("head.lp.w", ag::glorot_uniform({c, c}, c, c, rng));
    params_.add("head.lp.b", Tensor::zeros({c}));
    pooled = c;
  }
  const std::size_t e = config_.emb_dim, m = speakers_.size();
  params_.add("embed.w", ag::glorot_uniform({pooled, e}, pooled, e, rng));
  params_.add("embed.b", Tensor::zeros({e}));
  params_.add("cls.w", ag::glorot_uniform({e, m}, e, m, rng));
  params_.add("cls.b", Tensor::zeros({m}));
}

std::size_t EmbedderModel::min_frames() const {
  std::size_t span = 1;
  for (auto d : kDilations) span += d * (kKernel - 1);
  return span + (config_.pooling == Pooling::kStats ? 1 : 0);
}

Tensor EmbedderModel::forward(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != config_.frames.n_mels) {
    throw DimensionError("embedder: expected [T, " + std::to_string(config_.frames.n_mels) +
                         "] features, got " + ag::shape_str(features.shape()));
  }
  if (features.dim(0) < min_frames()) {
    throw DomainError("embedder: input too short (" + std::to_string(features.dim(0)) +
                      " frames, need " + std::to_string(min_frames()) + ")");
  }
  Tensor x = ag::transpose(normalize_features(features));  // [F, T]
  Tensor h;
  for (std::size_t l = 0; l < std::size(kDilations); ++l) {
    Tensor y = ag::conv1d(x, params_.at(layer("conv", l) + ".w"), 1, kDilations[l]);
    h = ag::layernorm(ag::relu(ag::transpose(y)), params_.at(layer("norm", l) + ".g"),
                      params_.at(layer("norm", l) + ".b"));  // [T', C]
    x = ag::transpose(h);
  }
  Tensor pooled;
  if (config_.pooling == Pooling::kStats) {
    pooled = stats_pool(h);
  } else {
    Tensor z = ag::linear(h, params_.at("head.z.w"), params_.at("head.z.b"));
    Tensor lp = ag::linear(h, params_.at("head.lp.w"), params_.at("head.lp.b"));
    pooled = gaussian_posterior_pool(z, lp);
  }
  pooled = ag::reshape(pooled, {1, pooled.numel()});
  return ag::linear(pooled, params_.at("embed.w"), params_.at("embed.b"));
}

Tensor EmbedderModel::classify(const Tensor& embedding) const {
  return ag::linear(ag::relu(embedding), params_.at("cls.w"), params_.at("cls.b"));
}

void EmbedderModel::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.header = {
      {"format", "tselab-embedder"},
      {"version", kFormatVersion},
      {"pooling", to_string(config_.pooling)},
      {"channels", config_.channels},
      {"emb_dim", config_.emb_dim},
      {"seed", config_.seed},
      {"frames",
       {{"win_ms", config_.frames.win_ms},
        {"hop_ms", config_.frames.hop_ms},
        {"n_mels", config_.frames.n_mels}}},
      {"speakers", speakers_},
  };
  for (const auto& [name, t] : params_.items()) ckpt.blobs.emplace_back(name, t.detach());
  save_checkpoint(path, ckpt);
}

EmbedderModel EmbedderModel::load(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path);
  const auto& h = ckpt.header;
  try {
    if (h.at("format") != "tselab-embedder") {
      throw FormatError(path.string() + ": not an embedder model");
    }
    if (h.at("version") != kFormatVersion) {
      throw FormatError(path.string() + ": unsupported embedder version " + h.at("version").dump());
    }
    EmbedderConfig cfg;
    cfg.pooling = parse_pooling(h.at("pooling").get<std::string>());
    cfg.channels = h.at("channels").get<std::size_t>();
    cfg.emb_dim = h.at("emb_dim").get<std::size_t>();
    cfg.seed = h.at("seed").get<std::uint64_t>();
    cfg.frames.win_ms = h.at("frames").at("win_ms").get<double>();
    cfg.frames.hop_ms = h.at("frames").at("hop_ms").get<double>();
    cfg.frames.n_mels = h.at("frames").at("n_mels").get<std::size_t>();
    EmbedderModel model(cfg, h.at("speakers").get<std::vector<std::string>>());
    model.params_.assign(ckpt.blob_map());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad embedder header: " + e.what());
  }
}

Embedding embed(const EmbedderModel& model, const audio::Waveform& wav) {
  ag::NoTapeScope no_tape;
  auto e = model.forward(logmel(wav, model.config().frames));
  return Embedding{e.to_vector(), to_string(model.config().pooling), "", ""};
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace tse::embed
