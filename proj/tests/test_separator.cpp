// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "doctest.h"
#include "support/temp_dir.hpp"
#include "tse/error.hpp"
#include "tse/gradcheck.hpp"
#include "tse/separator.hpp"

using namespace tse::sep;
using tse::ag::Shape;
using tse::ag::Tensor;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(tse::ag::shape_numel(shape));
  for (auto& x : v) x = g(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

std::vector<double> rand_cue(std::size_t n, std::mt19937_64& rng) {
  return randn({n}, rng).to_vector();
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Desk widths with a configurable block count.
SeparatorConfig small(std::size_t blocks = 1, std::size_t cue_dim = 6) {
  auto c = desk_preset(cue_dim);
  c.n_blocks = blocks;
  return c;
}

}  // namespace

TEST_CASE("encoder and decoder lengths") {
  SeparatorModel m(desk_preset(4));
  CHECK(m.encode(Tensor::zeros({8000})).shape() == Shape{999, 16});
  CHECK(m.encode(Tensor::zeros({16})).shape() == Shape{1, 16});
  CHECK_THROWS_AS(m.encode(Tensor::zeros({15})), tse::DomainError);
  for (double x : m.encode(Tensor::zeros({400})).data()) CHECK(x == 0.0);

  std::mt19937_64 rng(1);
  auto h = randn({999, 16}, rng);
  CHECK(m.decode(h, 8000).numel() == 8000);
  CHECK(m.decode(h, 7990).numel() == 7990);
  for (double x : m.decode(Tensor::zeros({999, 16}), 8000).data()) CHECK(x == 0.0);
}

TEST_CASE("chunk layout examples") {
  auto l = chunk_layout(500, 250, 0.5);
  CHECK(l.hop == 125);
  CHECK(l.chunks == 3);
  CHECK(l.padding == 0);
  CHECK(chunk_layout(250, 250, 0.5).chunks == 1);
  CHECK(chunk_layout(3, 8, 0.5).chunks == 1);
  CHECK(chunk_layout(3, 8, 0.5).padding == 5);
  auto odd = chunk_layout(501, 250, 0.5);
  CHECK(odd.chunks == 4);
  CHECK((odd.chunks - 1) * odd.hop + 250 == 501 + odd.padding);
  CHECK_THROWS_AS(chunk_layout(10, 1, 0.5), tse::DomainError);
  CHECK_THROWS_AS(chunk_layout(10, 4, 1.0), tse::DomainError);
}

TEST_CASE("chunk and overlap_add round trip exactly") {
  std::mt19937_64 rng(2);
  for (std::size_t t = 1; t <= 70; ++t) {
    for (std::size_t k : {2u, 3u, 8u, 11u}) {
      auto h = randn({t, 3}, rng);
      auto c = chunk(h, k, 0.5);
      CHECK(c.data.shape() == Shape{1, c.layout.chunks, k, 3});
      auto back = overlap_add(c);
      REQUIRE(back.shape() == h.shape());
      double err = 0.0;
      for (std::size_t i = 0; i < h.numel(); ++i) err = std::max(err, std::abs(back[i] - h[i]));
      CHECK(err < 1e-12);
    }
  }
  // S = 1 is the identity on the single chunk.
  auto one = ChunkTensor{randn({1, 1, 4, 2}, rng), chunk_layout(4, 4, 0.5)};
  CHECK(overlap_add(one).to_vector() == one.data.to_vector());
  // Constant chunks stay constant after count normalization.
  auto layout = chunk_layout(37, 8, 0.5);
  auto flat = overlap_add({Tensor::full({1, layout.chunks, 8, 2}, 2.5), layout});
  for (double x : flat.data()) CHECK(x == 2.5);
  // Corrupted metadata.
  auto bad = layout;
  bad.chunks += 1;
  CHECK_THROWS_AS(overlap_add({Tensor::full({1, layout.chunks, 8, 2}, 1.0), bad}),
                  tse::DimensionError);
  bad = layout;
  bad.frames += 3;
  CHECK_THROWS_AS(overlap_add({Tensor::full({1, layout.chunks, 8, 2}, 1.0), bad}),
                  tse::DimensionError);
}

TEST_CASE("chunk and overlap_add gradients match finite differences") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const std::size_t t = 2 + k, kk = 2 + k % 5;
    auto c = tse::ag::compare_gradients(
        [&](const std::vector<Tensor>& in) {
          return tse::ag::random_projection(chunk(in[0], kk, 0.5).data, k);
        },
        {randn({t, 2}, rng)});
    CHECK(c.relative_error < 1e-4);
    const auto layout = chunk_layout(t, kk, 0.5);
    auto o = tse::ag::compare_gradients(
        [&](const std::vector<Tensor>& in) {
          return tse::ag::random_projection(overlap_add({in[0], layout}), k);
        },
        {randn({1, layout.chunks, kk, 2}, rng)});
    CHECK(o.relative_error < 1e-4);
  }
}

TEST_CASE("positional encoding") {
  auto pe = positional_encoding(5, 4);
  CHECK(pe.shape() == Shape{5, 4});
  CHECK(pe[0] == 0.0);
  CHECK(pe[1] == 1.0);
  CHECK(pe[4 * 1 + 0] == doctest::Approx(std::sin(1.0)));
  CHECK(pe[4 * 1 + 2] == doctest::Approx(std::sin(0.01)));
}

TEST_CASE("mhca_fuse keeps shapes and is sensitive to the cue") {
  SeparatorModel m(small());
  std::mt19937_64 rng(4);
  for (auto shape : {Shape{3, 8, 16}, Shape{8, 3, 16}, Shape{1, 1, 16}}) {
    auto x = randn(shape, rng);
    auto cue = m.project_cue(rand_cue(6, rng));
    CHECK(m.mhca_fuse(x, cue, "block0.intra.layer0").shape() == shape);
  }
  CHECK_THROWS_AS(m.project_cue(std::vector<double>(5, 1.0)), tse::DimensionError);

  // Sensitivity of the fused output to the raw cue.
  auto x = randn({4, 8, 16}, rng);
  auto probe = [&](const std::vector<Tensor>& in) {
    auto e = tse::ag::linear(tse::ag::reshape(in[0], {1, 6}), m.params().at("cue.w"),
                             m.params().at("cue.b"));
    return tse::ag::random_projection(m.mhca_fuse(x, e, "block0.intra.layer0"), 9);
  };
  auto cmp = tse::ag::compare_gradients(probe, {randn({6}, rng)});
  CHECK(cmp.relative_error < 1e-4);
  CHECK(cmp.analytic_norm > 1e-6);
}

TEST_CASE("mask shapes, nonnegativity and fusion-site count") {
  std::mt19937_64 rng(5);
  for (std::size_t blocks : {1u, 2u, 4u}) {
    SeparatorModel m(small(blocks));
    auto h = m.encode(randn({800}, rng, 0.3));
    ForwardTrace trace;
    auto mask = m.mask(h, m.project_cue(rand_cue(6, rng)), &trace);
    CHECK(mask.shape() == h.shape());
    for (double v : mask.data()) CHECK(v >= 0.0);
    CHECK(trace.fusion_calls == 2 * blocks);
    const auto l = chunk_layout(h.dim(0), 8, 0.5);
    REQUIRE(trace.intra_inputs.size() == blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      CHECK(trace.intra_inputs[b] == Shape{l.chunks, 8, 16});
      CHECK(trace.inter_inputs[b] == Shape{8, l.chunks, 16});
    }
  }
  // Paper block count (N = 4) at desk width: 8 fusion sites.
  auto paper = paper_preset(6);
  CHECK(paper.n_blocks == 4);
  paper.feature_dim = 16;
  paper.ff_dim = 64;
  paper.n_heads = 2;
  paper.chunk_len = 8;
  SeparatorModel pm(paper);
  ForwardTrace trace;
  pm.forward(randn({200}, rng), rand_cue(6, rng), &trace);
  CHECK(trace.fusion_calls == 8);

  auto sig = small();
  sig.mask = MaskActivation::kSigmoid;
  SeparatorModel sm(sig);
  auto mask = sm.mask(sm.encode(randn({300}, rng)), sm.project_cue(rand_cue(6, rng)));
  for (double v : mask.data()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("zeroed cue projections reduce to the cue-free separator bit for bit") {
  std::mt19937_64 rng(6);
  for (std::size_t blocks : {1u, 2u}) {
    SeparatorModel m(small(blocks));
    const auto names = m.cue_parameter_names();
    CHECK(names.size() == 2 * 2 * blocks);
    for (const auto& n : names)
      for (auto& x : m.params().at(n).mutable_data()) x = 0.0;
    auto mix = randn({640}, rng, 0.3);
    auto with_cue = m.forward(mix, rand_cue(6, rng));
    ForwardTrace trace;
    auto cue_free = m.forward(mix, std::nullopt, &trace);
    CHECK(trace.fusion_calls == 0);
    REQUIRE(with_cue.numel() == cue_free.numel());
    CHECK(std::memcmp(with_cue.data().data(), cue_free.data().data(),
                      sizeof(double) * with_cue.numel()) == 0);
  }
}

TEST_CASE("every parameter receives a gradient at initialization") {
  std::mt19937_64 rng(7);
  for (std::size_t blocks : {1u, 2u}) {
    SeparatorModel m(small(blocks));
    tse::ag::Tape tape;
    {
      tse::ag::TapeScope scope(tape);
      auto est = m.forward(randn({480}, rng, 0.3), rand_cue(6, rng));
      tape.backward(tse::ag::random_projection(est, 1));
    }
    for (const auto& [name, p] : m.params().items()) {
      double n = 0.0;
      if (p.has_grad())
        for (double g : p.grad()) n += g * g;
      CHECK_MESSAGE(n > 0.0, name);
    }
  }
}

TEST_CASE("end-to-end gradients match finite differences") {
  auto c = small();
  c.feature_dim = 4;
  c.ff_dim = 6;
  c.chunk_len = 4;
  c.n_sa = 1;
  c.cue_dim = 3;
  SeparatorModel m(c);
  std::mt19937_64 rng(8);
  auto mix = randn({64}, rng, 0.5);
  auto cue = rand_cue(3, rng);
  std::vector<Tensor> inputs;
  for (const auto& [_, p] : m.params().items()) inputs.push_back(p.detach());
  auto cmp = tse::ag::compare_gradients(
      [&](const std::vector<Tensor>& in) {
        SeparatorModel probe(c);
        std::size_t i = 0;
        for (auto& [_, p] : probe.params().items()) p = in[i++];
        return tse::ag::random_projection(probe.forward(mix, cue), 3);
      },
      inputs);
  CHECK(cmp.relative_error < 1e-4);
}

TEST_CASE("extract is deterministic and length preserving") {
  SeparatorModel m(desk_preset(6));
  std::mt19937_64 rng(9);
  tse::audio::Waveform mix;
  for (std::size_t n : {16u, 100u, 803u, 1600u}) {
    mix.samples = randn({n}, rng, 0.3).to_vector();
    auto cue = rand_cue(6, rng);
    auto a = m.extract(mix, cue);
    CHECK(a.size() == n);
    CHECK(a.samples == m.extract(mix, cue).samples);
  }
  CHECK_THROWS_AS(m.extract(mix, std::vector<double>(7, 0.0)), tse::DimensionError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  tse::testing::TempDir dir;
  auto c = desk_preset(6);
  c.mask = MaskActivation::kSigmoid;
  c.normalize_cue = true;
  c.seed = 42;
  SeparatorModel m(c);
  m.save(dir / "a.ckpt");
  auto back = SeparatorModel::load(dir / "a.ckpt");
  CHECK(to_json(back.config()) == to_json(c));
  REQUIRE(back.params().size() == m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    CHECK(back.params().items()[i].first == m.params().items()[i].first);
    CHECK(back.params().items()[i].second.to_vector() == m.params().items()[i].second.to_vector());
  }
  back.save(dir / "b.ckpt");
  CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));

  auto bytes = file_bytes(dir / "a.ckpt");
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(SeparatorModel::load(dir / "cut.ckpt"), tse::FormatError);
  bytes[7] = '2';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(SeparatorModel::load(dir / "magic.ckpt"), tse::FormatError);
}

TEST_CASE("config validation") {
  auto c = desk_preset(4);
  c.n_heads = 3;
  CHECK_THROWS_AS(SeparatorModel{c}, tse::DomainError);
  c = desk_preset(4);
  c.n_ca = 0;
  CHECK_THROWS_AS(SeparatorModel{c}, tse::DomainError);
  c = desk_preset(4);
  c.chunk_overlap = 0.0;
  CHECK_THROWS_AS(SeparatorModel{c}, tse::DomainError);
  CHECK(paper_preset(512).feature_dim == 256);
  CHECK(paper_preset(512).chunk_len == 250);
  CHECK(paper_preset(512).n_heads == 8);
  CHECK_THROWS_AS(preset("huge", 4), tse::UsageError);
}
