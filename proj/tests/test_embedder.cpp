// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"
#include "tse/embedder.hpp"
#include "tse/error.hpp"
#include "tse/gradcheck.hpp"

using namespace tse::embed;
using tse::ag::Shape;
using tse::ag::Tensor;
using tse::audio::Waveform;

namespace {

Waveform tone(double freq, double seconds, double amp = 0.5) {
  Waveform w;
  const auto n = static_cast<std::size_t>(seconds * w.sample_rate);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * freq * i / w.sample_rate));
  }
  return w;
}

Tensor randn(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(tse::ag::shape_numel(shape));
  for (auto& x : v) x = g(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor permute_rows(const Tensor& x, std::mt19937_64& rng) {
  const std::size_t t = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> p(t);
  for (std::size_t i = 0; i < t; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  std::vector<double> v(t * d);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = x.data()[p[i] * d + j];
  return Tensor::from_data({t, d}, std::move(v));
}

EmbedderConfig tiny(Pooling pooling) {
  EmbedderConfig c;
  c.pooling = pooling;
  c.channels = 16;
  c.emb_dim = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("logmel frame count and silence floor") {
  Waveform one_s;
  one_s.samples.assign(8000, 0.0);
  auto f = logmel(one_s);
  CHECK(f.dim(0) == 98);
  CHECK(f.dim(1) == 24);
  for (double v : f.data()) CHECK(v == std::log(kLogFloor));

  Waveform w;
  w.samples.assign(200, 0.1);
  CHECK(logmel(w).dim(0) == 1);
  w.samples.assign(199, 0.1);
  CHECK_THROWS_AS(logmel(w), tse::DomainError);
  for (std::size_t len : {200u, 279u, 280u, 1001u, 16000u}) {
    w.samples.assign(len, 0.0);
    CHECK(logmel(w).dim(0) == (len - 200) / 80 + 1);
  }
}

TEST_CASE("logmel: a tone at a band centre peaks in that band") {
  const auto centres = mel_band_centers(24, 8000);
  // The filterbank rows themselves peak at the centres.
  auto fb = mel_filterbank(24, 256, 8000);
  for (std::size_t m = 0; m < 24; ++m) {
    CHECK(*std::max_element(fb[m].begin(), fb[m].end()) <= 1.0);
  }
  for (std::size_t b = 0; b < 24; ++b) {
    auto f = logmel(tone(centres[b], 0.5));
    for (std::size_t t = 0; t < f.dim(0); ++t) {
      auto row = f.data().subspan(t * 24, 24);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      CHECK_MESSAGE(best == b, "band " << b << " frame " << t);
    }
  }
}

TEST_CASE("stats_pool examples") {
  auto two = stats_pool(Tensor::from_data({2, 1}, {0.0, 2.0}));
  CHECK(two[0] == 1.0);
  CHECK(two[1] == doctest::Approx(1.0).epsilon(1e-8));

  auto constant = stats_pool(Tensor::full({10, 3}, 4.5));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(constant[j] == doctest::Approx(4.5));
    CHECK(constant[3 + j] == doctest::Approx(1e-4).epsilon(1e-9));
  }
  CHECK_THROWS_AS(stats_pool(Tensor::zeros({1, 4})), tse::DomainError);
  CHECK_THROWS_AS(stats_pool(Tensor::zeros({4})), tse::DimensionError);

  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    auto x = randn({7, 5}, rng);
    auto a = stats_pool(x), b = stats_pool(permute_rows(x, rng));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("gaussian_posterior_pool examples") {
  auto phi = gaussian_posterior_pool(Tensor::from_data({2, 1}, {1.0, 3.0}),
                                     Tensor::zeros({2, 1}));
  CHECK(phi[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));

  auto prior = gaussian_posterior_pool(Tensor::from_data({3, 1}, {5.0, -2.0, 9.0}),
                                       Tensor::full({3, 1}, -60.0));
  CHECK(std::abs(prior[0]) < 1e-20);

  auto dominated = gaussian_posterior_pool(Tensor::from_data({3, 1}, {5.0, -2.0, 9.0}),
                                           Tensor::from_data({3, 1}, {0.0, 20.0, 0.0}));
  CHECK(dominated[0] == doctest::Approx(-2.0).epsilon(1e-7));

  CHECK_THROWS_AS(gaussian_posterior_pool(Tensor::zeros({3, 2}), Tensor::zeros({2, 3})),
                  tse::DimensionError);
}

TEST_CASE("gaussian_posterior_pool is permutation invariant and convex") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    auto z = randn({9, 4}, rng, 3.0);
    auto lp = randn({9, 4}, rng, 2.0);
    auto phi = gaussian_posterior_pool(z, lp);
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = 0.0, hi = 0.0;
      for (std::size_t t = 0; t < 9; ++t) {
        lo = std::min(lo, z.data()[t * 4 + j]);
        hi = std::max(hi, z.data()[t * 4 + j]);
      }
      CHECK(phi[j] >= lo);
      CHECK(phi[j] <= hi);
    }
    // Permute z and log_prec rows together.
    std::vector<double> joint;
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t j = 0; j < 4; ++j) joint.push_back(z.data()[t * 4 + j]);
      for (std::size_t j = 0; j < 4; ++j) joint.push_back(lp.data()[t * 4 + j]);
    }
    auto p = permute_rows(Tensor::from_data({9, 8}, joint), rng);
    std::vector<double> zp, lpp;
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t j = 0; j < 4; ++j) zp.push_back(p.data()[t * 8 + j]);
      for (std::size_t j = 0; j < 4; ++j) lpp.push_back(p.data()[t * 8 + 4 + j]);
    }
    auto phi2 = gaussian_posterior_pool(Tensor::from_data({9, 4}, zp), Tensor::from_data({9, 4}, lpp));
    for (std::size_t j = 0; j < 4; ++j) CHECK(phi2[j] == doctest::Approx(phi[j]).epsilon(1e-12));
  }
}

TEST_CASE("pooling gradients match finite differences") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const std::size_t t = 2 + k % 6, d = 1 + k % 4;
    auto s = tse::ag::compare_gradients(
        [&](const std::vector<Tensor>& in) {
          return tse::ag::random_projection(stats_pool(in[0]), 11 + k);
        },
        {randn({t, d}, rng)});
    CHECK(s.relative_error < 1e-4);
    auto g = tse::ag::compare_gradients(
        [&](const std::vector<Tensor>& in) {
          return tse::ag::random_projection(gaussian_posterior_pool(in[0], in[1]), 17 + k);
        },
        {randn({t, d}, rng), randn({t, d}, rng)});
    CHECK(g.relative_error < 1e-4);
  }
}

TEST_CASE("embedder forward gradients match finite differences") {
  for (auto pooling : {Pooling::kStats, Pooling::kGaussian}) {
    EmbedderConfig c = tiny(pooling);
    c.channels = 4;
    c.emb_dim = 3;
    c.frames.n_mels = 5;
    EmbedderModel model(c, {"a", "b"});
    std::mt19937_64 rng(4);
    auto features = randn({16, 5}, rng);
    std::vector<Tensor> inputs;
    for (const auto& [_, p] : model.params().items()) inputs.push_back(p.detach());
    auto cmp = tse::ag::compare_gradients(
        [&](const std::vector<Tensor>& in) {
          std::size_t i = 0;
          EmbedderModel m(c, {"a", "b"});
          // Rebind the parameter slots to the probe inputs.
          for (auto& [name, p] : m.params().items()) p = in[i++];
          return tse::ag::random_projection(m.classify(m.forward(features)), 5);
        },
        inputs);
    CHECK(cmp.relative_error < 1e-4);
    CHECK(cmp.analytic_norm > 0.0);
  }
}

TEST_CASE("embed: fixed dimension, deterministic, too-short input rejected") {
  EmbedderModel model(tiny(Pooling::kGaussian), {"a", "b", "c"});
  auto profile = tse::audio::make_speaker_profile(7);
  auto a = embed(model, tse::audio::synth_speaker_utterance(profile, 0.6, 1));
  auto b = embed(model, tse::audio::synth_speaker_utterance(profile, 1.7, 2));
  CHECK(a.vector.size() == 8);
  CHECK(b.vector.size() == 8);
  CHECK(a.kind == "xivec");
  auto w = tse::audio::synth_speaker_utterance(profile, 0.9, 3);
  CHECK(embed(model, w).vector == embed(model, w).vector);

  Waveform short_wav;
  short_wav.samples.assign(100, 0.1);
  CHECK_THROWS_AS(embed(model, short_wav), tse::DomainError);
  short_wav.samples.assign(1000, 0.1);  // 10 frames < receptive field
  CHECK_THROWS_AS(embed(model, short_wav), tse::DomainError);
}

TEST_CASE("train_embedder rejects a single speaker") {
  auto utts = tse::testing::synthetic_utterances(1, 4, 0.5);
  CHECK_THROWS_AS(train_embedder(utts, tiny(Pooling::kStats), {}), tse::DataError);
}

TEST_CASE("train_embedder overfits four speakers and separates held-out voices") {
  auto utts = tse::testing::synthetic_utterances(4, 20, 0.8);
  EmbedderTrainConfig tc;
  tc.epochs = 50;
  tc.lr = 3e-3;
  tc.batch = 4;
  for (auto pooling : {Pooling::kStats, Pooling::kGaussian}) {
    auto result = train_embedder(utts, tiny(pooling), tc);
    double best = 0.0;
    for (const auto& e : result.log) best = std::max(best, e.train_accuracy);
    CHECK_MESSAGE(best > 0.95, to_string(pooling) << " best train accuracy " << best);
    REQUIRE(result.log.back().valid_accuracy.has_value());

    // Fresh utterances of the same voices.
    auto held = tse::testing::synthetic_utterances(4, 6, 0.8, 100);
    std::vector<Embedding> embs;
    for (std::size_t i = 0; i < held.size(); ++i) {
      held[i].wav = tse::audio::synth_speaker_utterance(
          tse::audio::make_speaker_profile(100 + i / 6), 0.8, 900000 + i);
      auto e = embed(result.model, held[i].wav);
      e.speaker_id = held[i].speaker;
      embs.push_back(e);
    }
    double intra = 0, inter = 0;
    std::size_t ni = 0, nx = 0;
    for (std::size_t i = 0; i < embs.size(); ++i) {
      for (std::size_t j = i + 1; j < embs.size(); ++j) {
        const double c = cosine(embs[i].vector, embs[j].vector);
        if (embs[i].speaker_id == embs[j].speaker_id) intra += c, ++ni;
        else inter += c, ++nx;
      }
    }
    CHECK(intra / ni > inter / nx);
  }
}

TEST_CASE("train_embedder is deterministic for a fixed seed") {
  auto utts = tse::testing::synthetic_utterances(3, 5, 0.5);
  EmbedderTrainConfig tc;
  tc.epochs = 3;
  auto a = train_embedder(utts, tiny(Pooling::kGaussian), tc);
  auto b = train_embedder(utts, tiny(Pooling::kGaussian), tc);
  CHECK(a.log.back().train_loss == b.log.back().train_loss);
  tc.seed = 2;
  auto c = train_embedder(utts, tiny(Pooling::kGaussian), tc);
  CHECK(a.log.back().train_loss != c.log.back().train_loss);
}

TEST_CASE("embedder model and archive round trips") {
  tse::testing::TempDir dir;
  EmbedderModel model(tiny(Pooling::kStats), {"x", "y"});
  model.save(dir / "emb.ckpt");
  auto loaded = EmbedderModel::load(dir / "emb.ckpt");
  CHECK(loaded.speakers() == model.speakers());
  auto w = tse::audio::synth_speaker_utterance(tse::audio::make_speaker_profile(1), 0.5, 1);
  CHECK(embed(loaded, w).vector == embed(model, w).vector);

  std::vector<Embedding> embs{{{0.5, -1.25, 3.0}, "xvec", "spk_a", "u1"},
                              {{1e-3, 2.0, -7.5}, "xvec", "b", "u2"}};
  write_embeddings(dir / "e.bin", embs);
  auto back = read_embeddings(dir / "e.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[0].speaker_id == "spk_a");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[1].vector[i] == static_cast<double>(static_cast<float>(embs[1].vector[i])));
  }
  CHECK(std::filesystem::exists(dir.path() / "e.bin.jsonl"));
  std::ofstream(dir / "bad.bin") << "TSEEMB02";
  CHECK_THROWS_AS(read_embeddings(dir / "bad.bin"), tse::FormatError);
  std::ofstream(dir / "bad.ckpt") << "garbage";
  CHECK_THROWS_AS(EmbedderModel::load(dir / "bad.ckpt"), tse::FormatError);
}
