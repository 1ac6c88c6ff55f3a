// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <random>

#include "tse/error.hpp"
#include "tse/separator.hpp"

namespace tse::sep {

using ag::Tensor;

namespace {

constexpr int kFormatVersion = 1;

std::string at(const std::string& prefix, const char* name) { return prefix + "." + name; }

// x[..., D] reshaped to [rows, D], multiplied by w[D, E] and reshaped back.
Tensor project(const Tensor& x, const Tensor& w) {
  auto shape = x.shape();
  const std::size_t d = shape.back();
  Tensor flat = ag::matmul(ag::reshape(x, {x.numel() / d, d}), w);
  shape.back() = w.dim(1);
  return ag::reshape(flat, shape);
}

}  // namespace

void SeparatorConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("separator config: " + m); };
  if (enc_kernel == 0 || enc_stride == 0) fail("encoder kernel and stride must be positive");
  if (feature_dim == 0 || n_heads == 0 || feature_dim % n_heads != 0) {
    fail("feature_dim must be a positive multiple of n_heads");
  }
  if (chunk_len < 2) fail("chunk_len must be at least 2");
  if (!(chunk_overlap > 0.0 && chunk_overlap < 1.0)) fail("chunk_overlap must be in (0, 1)");
  if (n_blocks == 0) fail("n_blocks must be positive");
  if (cue_dim > 0 && n_ca == 0) fail("a cue needs at least one cross-attention layer");
  if (n_ca + n_sa == 0) fail("transformers need at least one layer");
  if (ff_dim == 0) fail("ff_dim must be positive");
}

std::size_t SeparatorConfig::hop() const {
  return chunk_layout(chunk_len, chunk_len, chunk_overlap).hop;
}

SeparatorConfig desk_preset(std::size_t cue_dim) {
  SeparatorConfig c;
  c.cue_dim = cue_dim;
  return c;
}

SeparatorConfig paper_preset(std::size_t cue_dim) {
  SeparatorConfig c;
  c.feature_dim = 256;
  c.chunk_len = 250;
  c.n_blocks = 4;
  c.n_heads = 8;
  c.ff_dim = 4 * 256;
  c.cue_dim = cue_dim;
  return c;
}

SeparatorConfig preset(const std::string& name, std::size_t cue_dim) {
  if (name == "desk") return desk_preset(cue_dim);
  if (name == "paper") return paper_preset(cue_dim);
  throw UsageError("unknown separator preset '" + name + "' (expected desk or paper)");
}

nlohmann::json to_json(const SeparatorConfig& c) {
  return {{"enc_kernel", c.enc_kernel},     {"enc_stride", c.enc_stride},
          {"feature_dim", c.feature_dim},   {"chunk_len", c.chunk_len},
          {"chunk_overlap", c.chunk_overlap}, {"n_blocks", c.n_blocks},
          {"n_ca", c.n_ca},                 {"n_sa", c.n_sa},
          {"n_heads", c.n_heads},           {"ff_dim", c.ff_dim},
          {"cue_dim", c.cue_dim},
          {"mask", c.mask == MaskActivation::kRelu ? "relu" : "sigmoid"},
          {"normalize_cue", c.normalize_cue}, {"seed", c.seed}};
}

SeparatorConfig config_from_json(const nlohmann::json& j) {
  try {
    SeparatorConfig c;
    c.enc_kernel = j.at("enc_kernel").get<std::size_t>();
    c.enc_stride = j.at("enc_stride").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.chunk_len = j.at("chunk_len").get<std::size_t>();
    c.chunk_overlap = j.at("chunk_overlap").get<double>();
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.n_ca = j.at("n_ca").get<std::size_t>();
    c.n_sa = j.at("n_sa").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.cue_dim = j.at("cue_dim").get<std::size_t>();
    const auto mask = j.at("mask").get<std::string>();
    if (mask != "relu" && mask != "sigmoid") throw FormatError("unknown mask activation " + mask);
    c.mask = mask == "relu" ? MaskActivation::kRelu : MaskActivation::kSigmoid;
    c.normalize_cue = j.at("normalize_cue").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad separator config: ") + e.what());
  }
}

SeparatorModel::SeparatorModel(SeparatorConfig config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.feature_dim, f = config_.ff_dim, kk = config_.enc_kernel;
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name, ag::glorot_uniform({in, out}, in, out, rng));
  };
  auto zeros = [&](const std::string& name, std::size_t n) { params_.add(name, Tensor::zeros({n})); };

  params_.add("enc.w", ag::glorot_uniform({d, 1, kk}, kk, d, rng));
  if (config_.cue_dim > 0) {
    weight("cue.w", config_.cue_dim, d);
    zeros("cue.b", d);
  }
  for (std::size_t b = 0; b < config_.n_blocks; ++b) {
    for (const char* path : {"intra", "inter"}) {
      for (std::size_t j = 0; j < config_.n_ca + config_.n_sa; ++j) {
        const std::string p =
            "block" + std::to_string(b) + "." + path + ".layer" + std::to_string(j);
        weight(at(p, "q.w"), d, d);
        zeros(at(p, "q.b"), d);
        weight(at(p, "k.w"), d, d);
        weight(at(p, "v.w"), d, d);
        zeros(at(p, "v.b"), d);
        if (j < config_.n_ca && config_.cue_dim > 0) {
          weight(at(p, "qe.w"), d, d);
          weight(at(p, "ve.w"), d, d);
        }
        weight(at(p, "o.w"), d, d);
        zeros(at(p, "o.b"), d);
        params_.add(at(p, "ln1.g"), Tensor::full({d}, 1.0));
        zeros(at(p, "ln1.b"), d);
        weight(at(p, "ff1.w"), d, f);
        zeros(at(p, "ff1.b"), f);
        weight(at(p, "ff2.w"), f, d);
        zeros(at(p, "ff2.b"), d);
        params_.add(at(p, "ln2.g"), Tensor::full({d}, 1.0));
        zeros(at(p, "ln2.b"), d);
      }
    }
  }
  weight("post.w", d, d);
  zeros("post.b", d);
  weight("out.w", d, d);
  zeros("out.b", d);
  params_.add("dec.w", ag::glorot_uniform({d, 1, kk}, d, kk, rng));
}

std::vector<std::string> SeparatorModel::cue_parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_.items()) {
    if (name.ends_with(".qe.w") || name.ends_with(".ve.w")) out.push_back(name);
  }
  return out;
}

Tensor SeparatorModel::encode(const Tensor& wav) const {
  if (wav.rank() != 1) throw DimensionError("encode: expected a 1-D waveform");
  if (wav.numel() < config_.enc_kernel) {
    throw DomainError("encode: input too short (" + std::to_string(wav.numel()) +
                      " samples, kernel is " + std::to_string(config_.enc_kernel) + ")");
  }
  Tensor y = ag::conv1d(ag::reshape(wav, {1, wav.numel()}), params_.at("enc.w"),
                        config_.enc_stride);
  return ag::transpose(ag::relu(y));
}

Tensor SeparatorModel::decode(const Tensor& hm, std::size_t length) const {
  if (hm.rank() != 2 || hm.dim(1) != config_.feature_dim) {
    throw DimensionError("decode: expected [T, " + std::to_string(config_.feature_dim) +
                         "], got " + ag::shape_str(hm.shape()));
  }
  Tensor y = ag::conv1d_transpose(ag::transpose(hm), params_.at("dec.w"), config_.enc_stride);
  return ag::reshape(ag::resize_last(y, length), {length});
}

Tensor SeparatorModel::project_cue(std::span<const double> cue) const {
  if (config_.cue_dim == 0) throw DimensionError("this separator takes no speaker cue");
  if (cue.size() != config_.cue_dim) {
    throw DimensionError("cue dim " + std::to_string(cue.size()) + " does not match model cue_dim " +
                         std::to_string(config_.cue_dim));
  }
  std::vector<double> e(cue.begin(), cue.end());
  for (double x : e) {
    if (!std::isfinite(x)) throw DataError("speaker cue has non-finite values");
  }
  if (config_.normalize_cue) {
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& x : e) x /= norm;
  }
  const std::size_t n = e.size();
  return ag::linear(Tensor::from_data({1, n}, std::move(e)), params_.at("cue.w"),
                    params_.at("cue.b"));
}

Tensor SeparatorModel::attention(const Tensor& q, const Tensor& k, const Tensor& v) const {
  const std::size_t n = q.dim(0), len = q.dim(1), d = q.dim(2);
  const std::size_t h = config_.n_heads, dh = d / h;
  auto split = [&](const Tensor& x) {
    return ag::reshape(ag::permute(ag::reshape(x, {n, len, h, dh}), {0, 2, 1, 3}),
                       {n * h, len, dh});
  };
  Tensor scores = ag::scale(ag::bmm(split(q), split(k), true), 1.0 / std::sqrt(double(dh)));
  Tensor out = ag::bmm(ag::softmax(scores, -1), split(v));
  return ag::reshape(ag::permute(ag::reshape(out, {n, h, len, dh}), {0, 2, 1, 3}), {n, len, d});
}

// Q = x Wq + bq + E Wqe, K = x Wk, V = x Wv + bv + E Wve. A cue term on the
// keys would add the same value to every score of a query and cancel in the
// softmax, so the keys carry neither a cue term nor a bias.
Tensor SeparatorModel::mhca_fuse(const Tensor& x, const std::optional<Tensor>& cue_proj,
                                 const std::string& prefix) const {
  if (x.rank() != 3 || x.dim(2) != config_.feature_dim) {
    throw DimensionError("attention: expected [n, L, " + std::to_string(config_.feature_dim) +
                         "], got " + ag::shape_str(x.shape()));
  }
  Tensor q = ag::linear(x, params_.at(at(prefix, "q.w")), params_.at(at(prefix, "q.b")));
  Tensor k = project(x, params_.at(at(prefix, "k.w")));
  Tensor v = ag::linear(x, params_.at(at(prefix, "v.w")), params_.at(at(prefix, "v.b")));
  if (cue_proj) {
    const std::size_t d = config_.feature_dim;
    q = ag::add_rowvec(q, ag::reshape(ag::matmul(*cue_proj, params_.at(at(prefix, "qe.w"))), {d}));
    v = ag::add_rowvec(v, ag::reshape(ag::matmul(*cue_proj, params_.at(at(prefix, "ve.w"))), {d}));
  }
  Tensor f = ag::linear(attention(q, k, v), params_.at(at(prefix, "o.w")),
                        params_.at(at(prefix, "o.b")));
  return ag::layernorm(ag::add(x, f), params_.at(at(prefix, "ln1.g")),
                       params_.at(at(prefix, "ln1.b")));
}

Tensor SeparatorModel::feed_forward(const Tensor& x, const std::string& prefix) const {
  Tensor hidden = ag::relu(ag::linear(x, params_.at(at(prefix, "ff1.w")),
                                      params_.at(at(prefix, "ff1.b"))));
  Tensor y = ag::linear(hidden, params_.at(at(prefix, "ff2.w")), params_.at(at(prefix, "ff2.b")));
  return ag::layernorm(ag::add(x, y), params_.at(at(prefix, "ln2.g")),
                       params_.at(at(prefix, "ln2.b")));
}

Tensor SeparatorModel::self_attention_layer(const Tensor& x, const std::string& prefix) const {
  return feed_forward(mhca_fuse(x, std::nullopt, prefix), prefix);
}

Tensor SeparatorModel::transformer(const Tensor& x, const std::optional<Tensor>& cue_proj,
                                   const std::string& prefix, ForwardTrace* trace) const {
  const std::size_t n = x.dim(0), len = x.dim(1), d = x.dim(2);
  Tensor pe = ag::reshape(positional_encoding(len, d), {len * d});
  Tensor y = ag::reshape(ag::add_rowvec(ag::reshape(x, {n, len * d}), pe), {n, len, d});
  for (std::size_t j = 0; j < config_.n_ca + config_.n_sa; ++j) {
    const std::string p = prefix + ".layer" + std::to_string(j);
    if (j < config_.n_ca && cue_proj) {
      if (trace) ++trace->fusion_calls;
      y = feed_forward(mhca_fuse(y, cue_proj, p), p);
    } else {
      y = self_attention_layer(y, p);
    }
  }
  return y;
}

Tensor SeparatorModel::mask(const Tensor& h, const std::optional<Tensor>& cue_proj,
                            ForwardTrace* trace) const {
  const std::size_t d = config_.feature_dim;
  if (h.rank() != 2 || h.dim(1) != d) {
    throw DimensionError("mask: expected [T, " + std::to_string(d) + "], got " +
                         ag::shape_str(h.shape()));
  }
  ChunkTensor c = chunk(h, config_.chunk_len, config_.chunk_overlap);
  const std::size_t s = c.layout.chunks, k = c.layout.chunk_len;
  Tensor x = ag::reshape(c.data, {s, k, d});
  for (std::size_t b = 0; b < config_.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    if (trace) trace->intra_inputs.push_back(x.shape());
    x = ag::add(x, transformer(x, cue_proj, p + ".intra", trace));
    Tensor xt = ag::permute(x, {1, 0, 2});  // [K, S, D]
    if (trace) trace->inter_inputs.push_back(xt.shape());
    xt = ag::add(xt, transformer(xt, cue_proj, p + ".inter", trace));
    x = ag::permute(xt, {1, 0, 2});
  }
  x = ag::relu(ag::linear(x, params_.at("post.w"), params_.at("post.b")));
  Tensor y = overlap_add({ag::reshape(x, {1, s, k, d}), c.layout});
  Tensor m = ag::linear(y, params_.at("out.w"), params_.at("out.b"));
  return config_.mask == MaskActivation::kRelu ? ag::relu(m) : ag::sigmoid(m);
}

Tensor SeparatorModel::forward(const Tensor& mixture, std::optional<std::span<const double>> cue,
                               ForwardTrace* trace) const {
  std::optional<Tensor> e;
  if (cue) e = project_cue(*cue);
  Tensor h = encode(mixture);
  Tensor m = mask(h, e, trace);
  return decode(ag::mul(h, m), mixture.numel());
}

audio::Waveform SeparatorModel::extract(const audio::Waveform& mixture,
                                        std::span<const double> cue) const {
  ag::NoTapeScope no_tape;
  Tensor est = forward(Tensor::from_data({mixture.size()}, mixture.samples), cue);
  return {est.to_vector(), mixture.sample_rate};
}

Checkpoint SeparatorModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.header = {{"format", "tselab-separator"},
                 {"version", kFormatVersion},
                 {"config", to_json(config_)}};
  for (const auto& [name, t] : params_.items()) ckpt.blobs.emplace_back(name, t.detach());
  return ckpt;
}

SeparatorModel SeparatorModel::from_checkpoint(const Checkpoint& ckpt) {
  const auto& h = ckpt.header;
  if (!h.contains("format") || h["format"] != "tselab-separator") {
    throw FormatError("checkpoint does not hold a separator model");
  }
  if (!h.contains("version") || h["version"] != kFormatVersion) {
    throw FormatError("unsupported separator checkpoint version");
  }
  if (!h.contains("config")) throw FormatError("separator checkpoint has no config");
  SeparatorModel model(config_from_json(h["config"]));
  model.params_.assign(ckpt.blob_map());
  return model;
}

void SeparatorModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, to_checkpoint());
}

SeparatorModel SeparatorModel::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

}  // namespace tse::sep
