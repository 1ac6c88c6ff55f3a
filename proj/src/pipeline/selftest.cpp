// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <random>

#include "tse/embedder.hpp"
#include "tse/gradcheck.hpp"
#include "tse/separator.hpp"
#include "tse/trainer.hpp"

namespace tse::selftest {

using ag::LossFn;
using ag::Shape;
using ag::Tensor;

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::string> SuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c.name);
  return out;
}

nlohmann::json to_json(const CheckResult& c) {
  nlohmann::json j{{"name", c.name},           {"passed", c.passed},
                   {"value", c.value},         {"threshold", c.threshold},
                   {"instances", c.instances}};
  if (!c.detail.empty()) j["detail"] = c.detail;
  return j;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ag::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double gap = 1e-2) {
  auto t = uniform(std::move(shape), rng);
  for (auto& x : t.mutable_data())
    if (std::abs(x) < gap) x = x < 0 ? -gap : gap;
  t.mutable_data()[0] = std::abs(t[0]);
  return t;
}

// Accumulates the worst relative error per named check.
class GradChecks {
 public:
  void run(const std::string& name, const LossFn& f, const std::vector<Tensor>& inputs) {
    auto& c = slot(name);
    ++c.instances;
    try {
      auto cmp = ag::compare_gradients(f, inputs);
      double err = cmp.relative_error;
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      c.value = std::max(c.value, err);
      if (!(cmp.analytic_norm > 0.0) && !(cmp.numeric_norm > 0.0)) {
        c.detail = "vanishing gradient on instance " + std::to_string(c.instances);
        c.value = std::numeric_limits<double>::infinity();
      }
    } catch (const std::exception& e) {
      c.detail = e.what();
      c.value = std::numeric_limits<double>::infinity();
    }
  }

  void fail(const std::string& name, const std::string& why) {
    auto& c = slot(name);
    c.detail = why;
    c.value = std::numeric_limits<double>::infinity();
  }

  std::vector<CheckResult> results() const {
    std::vector<CheckResult> out;
    for (const auto& name : order_) {
      auto c = checks_.at(name);
      c.threshold = kGradTolerance;
      c.passed = c.value < kGradTolerance;
      out.push_back(std::move(c));
    }
    return out;
  }

 private:
  CheckResult& slot(const std::string& name) {
    auto it = checks_.find(name);
    if (it == checks_.end()) {
      order_.push_back(name);
      CheckResult c;
      c.name = name;
      it = checks_.emplace(name, std::move(c)).first;
    }
    return it->second;
  }

  std::vector<std::string> order_;
  std::map<std::string, CheckResult> checks_;
};

void op_checks(GradChecks& g, std::size_t instances, std::mt19937_64& rng) {
  using namespace ag;
  for (std::size_t i = 0; i < instances; ++i) {
    auto p = [i](const Tensor& t) { return random_projection(t, 1000 + i); };
    const std::size_t m = 1 + i % 3, k = 2 + i % 4, n = 1 + (i + 1) % 3;
    g.run("add", [&](const auto& v) { return p(add(v[0], v[1])); },
          {uniform({m, k}, rng), uniform({m, k}, rng)});
    g.run("sub", [&](const auto& v) { return p(sub(v[0], v[1])); },
          {uniform({m, k}, rng), uniform({}, rng)});
    g.run("mul", [&](const auto& v) { return p(mul(v[0], v[1])); },
          {uniform({k}, rng), uniform({k}, rng)});
    g.run("div", [&](const auto& v) { return p(div(v[0], v[1])); },
          {uniform({k}, rng), uniform({k}, rng, 0.5, 1.5)});
    g.run("scale", [&](const auto& v) { return p(scale(v[0], -1.7)); }, {uniform({k}, rng)});
    g.run("relu", [&](const auto& v) { return p(relu(v[0])); }, {away_from_zero({m, k}, rng)});
    g.run("sigmoid", [&](const auto& v) { return p(sigmoid(v[0])); }, {uniform({m, k}, rng)});
    g.run("exp", [&](const auto& v) { return p(exp(v[0])); }, {uniform({k}, rng)});
    g.run("log", [&](const auto& v) { return p(log(v[0])); }, {uniform({k}, rng, 0.2, 1.0)});
    g.run("sum", [&](const auto& v) { return mul(sum(v[0]), sum(v[0])); },
          {uniform({m, k}, rng)});
    g.run("mean", [&](const auto& v) { return mul(mean(v[0]), mean(v[0])); },
          {uniform({m, k}, rng)});
    g.run("matmul", [&](const auto& v) { return p(matmul(v[0], v[1])); },
          {uniform({m, k}, rng), uniform({k, n}, rng)});
    g.run("bmm", [&](const auto& v) { return p(bmm(v[0], v[1], i % 2 == 1)); },
          {uniform({2, m, k}, rng), uniform({2, i % 2 ? n : k, i % 2 ? k : n}, rng)});
    g.run("add_rowvec", [&](const auto& v) { return p(add_rowvec(v[0], v[1])); },
          {uniform({m, 2, k}, rng), uniform({k}, rng)});
    g.run("linear", [&](const auto& v) { return p(linear(v[0], v[1], v[2])); },
          {uniform({m, k}, rng), uniform({k, n}, rng), uniform({n}, rng)});
    const int axis = i % 2 ? 0 : -1;
    g.run("softmax", [&](const auto& v) { return p(softmax(v[0], axis)); },
          {uniform({m + 1, k}, rng)});
    g.run("layernorm", [&](const auto& v) { return p(layernorm(v[0], v[1], v[2], 1e-8)); },
          {uniform({m, k}, rng), uniform({k}, rng), uniform({k}, rng)});
    const std::vector<std::size_t> labels{0, (k - 1) % k, 1 % k};
    g.run("cross_entropy",
          [&](const auto& v) { return cross_entropy(v[0], std::span(labels.data(), m)); },
          {uniform({m, k}, rng)});
    const std::size_t kw = 2 + i % 3, stride = 1 + i % 3, dil = 1 + i % 2;
    const std::size_t len = dil * (kw - 1) + 1 + stride * (1 + i % 4);
    g.run("conv1d", [&](const auto& v) { return p(conv1d(v[0], v[1], stride, dil)); },
          {uniform({m, len}, rng), uniform({n, m, kw}, rng)});
    g.run("conv1d_transpose",
          [&](const auto& v) { return p(conv1d_transpose(v[0], v[1], stride)); },
          {uniform({m, 3 + i % 3}, rng), uniform({m, n, kw}, rng)});
    g.run("reshape", [&](const auto& v) { return p(reshape(v[0], {k, m})); },
          {uniform({m, k}, rng)});
    g.run("permute", [&](const auto& v) { return p(permute(v[0], {2, 0, 1})); },
          {uniform({m, k, n}, rng)});
    g.run("transpose", [&](const auto& v) { return p(transpose(v[0])); }, {uniform({m, k}, rng)});
    g.run("resize_last", [&](const auto& v) { return p(resize_last(v[0], k + 1 - i % 3)); },
          {uniform({m, k}, rng)});

    const std::size_t t = 2 + i, kk = 2 + i % 5;
    g.run("chunk", [&](const auto& v) { return p(sep::chunk(v[0], kk, 0.5).data); },
          {uniform({t, 2}, rng)});
    const auto layout = sep::chunk_layout(t, kk, 0.5);
    g.run("overlap_add", [&](const auto& v) { return p(sep::overlap_add({v[0], layout})); },
          {uniform({1, layout.chunks, kk, 2}, rng)});
    const std::size_t frames = 2 + i % 6, d = 1 + i % 4;
    g.run("stats_pool", [&](const auto& v) { return p(embed::stats_pool(v[0])); },
          {uniform({frames, d}, rng)});
    g.run("gaussian_posterior_pool",
          [&](const auto& v) { return p(embed::gaussian_posterior_pool(v[0], v[1])); },
          {uniform({frames, d}, rng), uniform({frames, d}, rng)});
    auto target = uniform({16 + i}, rng).to_vector();
    g.run("si_sdr_loss", [&](const auto& v) { return train::si_sdr_loss(target, v[0]); },
          {uniform({16 + i}, rng)});
  }
}

// True when one backward pass gives every input a nonzero gradient. A
// composite whose ReLUs are all dead on a draw would otherwise pass trivially.
bool reaches_every_input(const LossFn& f, const std::vector<Tensor>& inputs) {
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) {
    leaves.push_back(t.detach());
    leaves.back().set_requires_grad(true);
  }
  ag::Tape tape;
  ag::TapeScope scope(tape);
  tape.backward(f(leaves));
  return std::all_of(leaves.begin(), leaves.end(), [](const Tensor& t) {
    if (!t.has_grad()) return false;
    const auto g = t.grad();
    return std::any_of(g.begin(), g.end(), [](double x) { return x != 0.0; });
  });
}

std::vector<Tensor> detached(const ag::ParameterSet& ps) {
  std::vector<Tensor> out;
  for (const auto& [_, p] : ps.items()) out.push_back(p.detach());
  return out;
}

void model_checks(GradChecks& g, std::mt19937_64& rng) {
  for (auto pooling : {embed::Pooling::kStats, embed::Pooling::kGaussian}) {
    embed::EmbedderConfig c;
    c.pooling = pooling;
    c.channels = 4;
    c.emb_dim = 3;
    c.frames.n_mels = 5;
    const std::vector<std::string> spk{"a", "b"};
    embed::EmbedderModel model(c, spk);
    Tensor features;
    const LossFn f = [&](const std::vector<Tensor>& in) {
      embed::EmbedderModel m(c, spk);
      std::size_t i = 0;
      for (auto& [_, p] : m.params().items()) p = in[i++];
      return ag::random_projection(m.classify(m.forward(features)), 5);
    };
    const auto params = detached(model.params());
    const std::string name = "embedder(" + embed::to_string(pooling) + ")";
    bool covered = false;
    for (int draw = 0; draw < 8 && !covered; ++draw) {
      features = uniform({16, 5}, rng);
      covered = reaches_every_input(f, params);
    }
    if (covered) g.run(name, f, params);
    else g.fail(name, "no feature draw reached every parameter");
  }
  auto c = sep::desk_preset(3);
  c.feature_dim = 4;
  c.ff_dim = 6;
  c.chunk_len = 4;
  c.n_sa = 1;
  sep::SeparatorModel model(c);
  auto mix = uniform({64}, rng, -0.5, 0.5).to_vector();
  auto cue = uniform({3}, rng).to_vector();
  const LossFn f = [&](const std::vector<Tensor>& in) {
    sep::SeparatorModel m(c);
    std::size_t i = 0;
    for (auto& [_, p] : m.params().items()) p = in[i++];
    return ag::random_projection(m.forward(Tensor::from_data({mix.size()}, mix), cue), 3);
  };
  const auto params = detached(model.params());
  if (reaches_every_input(f, params)) g.run("separator", f, params);
  else g.fail("separator", "some parameter received no gradient");
}

struct FaultGuard {
  explicit FaultGuard(const GradSuiteOptions& o) {
    if (!o.inject_fault.empty()) ag::set_gradient_fault(o.inject_fault, o.fault_factor);
  }
  ~FaultGuard() { ag::set_gradient_fault("", 1.0); }
};

CheckResult exact(const std::string& name, double value, double threshold, std::size_t n,
                  bool strict_zero = false) {
  CheckResult c;
  c.name = name;
  c.value = value;
  c.threshold = threshold;
  c.instances = n;
  c.passed = strict_zero ? value == 0.0 : value < threshold;
  return c;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

SuiteReport gradient_suite(const GradSuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  FaultGuard fault(options);
  std::mt19937_64 rng(options.seed);
  GradChecks g;
  op_checks(g, options.instances, rng);
  model_checks(g, rng);
  SuiteReport r{g.results()};
  r.wall_s = seconds_since(t0);
  return r;
}

SuiteReport invariant_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  SuiteReport r;

  {
    double worst = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 1; t <= 60; ++t) {
      for (std::size_t k : {2u, 3u, 8u, 11u}) {
        for (double overlap : {0.25, 0.5, 0.75}) {
          auto h = uniform({t, 3}, rng);
          auto back = sep::overlap_add(sep::chunk(h, k, overlap));
          worst = std::max(worst, max_abs_diff(back.data(), h.data()));
          ++n;
        }
      }
    }
    r.checks.push_back(exact("chunk_overlap_add_round_trip", worst, 1e-12, n));
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const std::size_t cin = 1 + i % 3, cout = 1 + (i + 1) % 3, kw = 2 + i % 4,
                        stride = 1 + i % 3, len = kw + stride * (2 + i % 5);
      auto w = uniform({cout, cin, kw}, rng);
      auto x = uniform({cin, len}, rng);
      auto y = ag::conv1d(x, w, stride);
      auto v = uniform(y.shape(), rng);
      auto back = ag::conv1d_transpose(v, w, stride);
      double lhs = 0.0, rhs = 0.0, scale = 0.0;
      for (std::size_t j = 0; j < y.numel(); ++j) lhs += v[j] * y[j];
      // The transpose may be longer than x when the stride does not divide.
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < len; ++j) {
          const double a = back[c * back.dim(1) + j], b = x[c * len + j];
          rhs += a * b;
          scale += std::abs(a * b);
        }
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(scale, 1e-300));
    }
    r.checks.push_back(exact("conv1d_adjoint", worst, 1e-12, 20));
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const std::size_t t = 2 + i, d = 1 + i % 5;
      auto z = uniform({t, d}, rng);
      auto lp = uniform({t, d}, rng);
      std::vector<std::size_t> perm(t);
      for (std::size_t j = 0; j < t; ++j) perm[j] = j;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> zp(t * d), lpp(t * d);
      for (std::size_t a = 0; a < t; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          zp[a * d + b] = z[perm[a] * d + b];
          lpp[a * d + b] = lp[perm[a] * d + b];
        }
      auto zt = Tensor::from_data({t, d}, zp), lpt = Tensor::from_data({t, d}, lpp);
      worst = std::max(worst, max_abs_diff(embed::stats_pool(z).data(),
                                           embed::stats_pool(zt).data()));
      worst = std::max(worst, max_abs_diff(embed::gaussian_posterior_pool(z, lp).data(),
                                           embed::gaussian_posterior_pool(zt, lpt).data()));
    }
    r.checks.push_back(exact("pooling_permutation_invariance", worst, 1e-12, 20));
  }
  {
    double miss = 0.0;
    std::size_t n = 0;
    auto cue = uniform({6}, rng).to_vector();
    auto mix = uniform({400}, rng, -0.3, 0.3);
    for (std::size_t blocks : {1u, 2u, 4u}) {
      auto c = sep::desk_preset(6);
      c.n_blocks = blocks;
      sep::SeparatorModel m(c);
      sep::ForwardTrace trace;
      m.forward(mix, cue, &trace);
      miss += std::abs(static_cast<double>(trace.fusion_calls) - 2.0 * blocks);
      ++n;
    }
    // Paper block count at desk width.
    auto paper = sep::paper_preset(6);
    paper.feature_dim = 16;
    paper.ff_dim = 64;
    paper.n_heads = 2;
    paper.chunk_len = 8;
    sep::SeparatorModel pm(paper);
    sep::ForwardTrace trace;
    pm.forward(mix, cue, &trace);
    miss += std::abs(static_cast<double>(trace.fusion_calls) - 8.0);
    auto check = exact("fusion_site_count", miss, 0.0, n + 1, true);
    check.detail = "paper preset: " + std::to_string(trace.fusion_calls) + " fusion sites";
    r.checks.push_back(check);
  }
  {
    double differing = 0.0;
    for (std::size_t blocks : {1u, 2u}) {
      auto c = sep::desk_preset(6);
      c.n_blocks = blocks;
      sep::SeparatorModel m(c);
      for (const auto& name : m.cue_parameter_names())
        for (auto& x : m.params().at(name).mutable_data()) x = 0.0;
      auto mix = uniform({640}, rng, -0.3, 0.3);
      auto with_cue = m.forward(mix, uniform({6}, rng).to_vector());
      auto cue_free = m.forward(mix, std::nullopt);
      if (with_cue.numel() != cue_free.numel() ||
          std::memcmp(with_cue.data().data(), cue_free.data().data(),
                      sizeof(double) * with_cue.numel()) != 0)
        differing += 1.0;
    }
    r.checks.push_back(exact("cue_ablation_bit_exact", differing, 0.0, 2, true));
  }
  r.wall_s = seconds_since(t0);
  return r;
}

}  // namespace tse::selftest
