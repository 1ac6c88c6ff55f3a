// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <random>

#include "doctest.h"
#include "tse/error.hpp"
#include "tse/gradcheck.hpp"
#include "tse/tensor.hpp"

using namespace tse::ag;

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0,
               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Uniform on [-1, 1] but at least `gap` away from zero.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double gap = 1e-2) {
  auto t = uniform(std::move(shape), rng);
  for (auto& x : t.mutable_data()) {
    if (std::abs(x) < gap) x = x < 0 ? -gap : gap;
  }
  // Keep one active unit so relu probes are never identically zero.
  t.mutable_data()[0] = std::abs(t[0]);
  return t;
}

void check_op(const LossFn& f, const std::vector<Tensor>& inputs) {
  auto cmp = compare_gradients(f, inputs);
  CHECK(cmp.relative_error < 1e-4);
  CHECK(cmp.analytic_norm > 0.0);
}

}  // namespace

TEST_CASE("matmul examples") {
  auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(eye, m).to_vector() == m.to_vector());

  auto ones = Tensor::from_data({2, 1}, {1, 1});
  auto r = matmul(m, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.to_vector() == std::vector<double>{3, 7});

  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const tse::DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("elementwise examples") {
  auto x = Tensor::from_data({3}, {-1, 0, 2});
  CHECK(relu(x).to_vector() == std::vector<double>{0, 0, 2});
  CHECK(add(x, Tensor::zeros({3})).to_vector() == x.to_vector());
  CHECK(add(x, Tensor::scalar(0.0)).to_vector() == x.to_vector());
  CHECK(mul(Tensor::from_data({2}, {2, 3}), Tensor::from_data({2}, {4, 5}))
            .to_vector() == std::vector<double>{8, 15});
  CHECK_THROWS_AS(log(Tensor::from_data({2}, {1.0, 0.0})), tse::DomainError);
  CHECK_THROWS_AS(log(Tensor::from_data({1}, {-2.0})), tse::DomainError);
  CHECK_THROWS_AS(div(x, Tensor::from_data({3}, {1, 0, 1})), tse::DomainError);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})),
                  tse::DimensionError);
}

TEST_CASE("relu gradient is zero at exactly zero") {
  auto x = Tensor::from_data({3}, {-1, 0, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  auto loss = sum(relu(x));
  tape.backward(loss);
  CHECK(x.to_vector().size() == 3);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) ==
        std::vector<double>{0, 0, 1});
}

TEST_CASE("softmax examples and invariants") {
  auto u = softmax(Tensor::from_data({3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = softmax(Tensor::from_data({2}, {1000, 0}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  auto s = softmax(Tensor::from_data({3}, {1, 2, 3}));
  CHECK(std::abs(s[0] - 0.0900) < 1e-4);
  CHECK(std::abs(s[1] - 0.2447) < 1e-4);
  CHECK(std::abs(s[2] - 0.6652) < 1e-4);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = uniform({4, 7}, rng, -5.0, 5.0);
    auto y = softmax(x, 1);
    auto shifted = x.to_vector();
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t j = 0; j < 7; ++j) shifted[r * 7 + j] += 3.25 * (r + 1);
    }
    auto y2 = softmax(Tensor::from_data({4, 7}, shifted), 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        total += y[r * 7 + j];
        CHECK(y[r * 7 + j] >= 0.0);
        CHECK(std::abs(y[r * 7 + j] - y2[r * 7 + j]) < 1e-12);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    // Axis 0 normalizes columns.
    auto c = softmax(x, 0);
    for (std::size_t j = 0; j < 7; ++j) {
      double total = 0.0;
      for (std::size_t r = 0; r < 4; ++r) total += c[r * 7 + j];
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layernorm examples") {
  auto one = Tensor::full({2}, 1.0);
  auto zero = Tensor::zeros({2});
  auto c = layernorm(Tensor::from_data({1, 2}, {5, 5}), one, zero, 1e-8);
  CHECK(c.to_vector() == std::vector<double>{0, 0});

  auto y = layernorm(Tensor::from_data({1, 2}, {1, 3}), one, zero, 1e-15);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-12));

  auto bias = Tensor::from_data({2}, {0.5, -2});
  auto z = layernorm(Tensor::from_data({2, 2}, {1, 3, 7, -4}),
                     Tensor::zeros({2}), bias, 1e-8);
  CHECK(z.to_vector() == std::vector<double>{0.5, -2, 0.5, -2});
}

TEST_CASE("conv1d and conv1d_transpose lengths") {
  auto k = Tensor::zeros({1, 1, 16});
  CHECK(conv1d(Tensor::zeros({1, 8000}), k, 8).shape() == Shape{1, 999});
  CHECK(conv1d(Tensor::zeros({1, 16}), k, 8).shape() == Shape{1, 1});
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 15}), k, 8), tse::DomainError);
  CHECK(conv1d_transpose(Tensor::zeros({1, 999}), k, 8).shape() ==
        Shape{1, 8000});
  CHECK(conv1d_transpose(Tensor::zeros({1, 1}), k, 8).shape() == Shape{1, 16});
  // Dilated span: d(k-1)+1 = 7 for k=3, d=3.
  auto k3 = Tensor::zeros({2, 1, 3});
  CHECK(conv1d(Tensor::zeros({1, 10}), k3, 1, 3).shape() == Shape{2, 4});
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 6}), k3, 1, 3), tse::DomainError);
}

TEST_CASE("conv1d_transpose is the adjoint of conv1d") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t cin = 1 + trial % 3, cout = 1 + (trial / 3) % 4;
    const std::size_t k = 2 + trial % 5, stride = 1 + trial % 4;
    const std::size_t len = k + stride * (trial % 6) + trial % 2;
    auto w = uniform({cout, cin, k}, rng);
    auto x = uniform({cin, len}, rng);
    auto y = conv1d(x, w, stride);
    auto yr = uniform(y.shape(), rng);
    auto xt = conv1d_transpose(yr, w, stride);
    REQUIRE(xt.dim(0) == cin);
    REQUIRE(xt.dim(1) <= len);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) lhs += y[i] * yr[i];
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t t = 0; t < xt.dim(1); ++t) {
        rhs += x[c * len + t] * xt[c * xt.dim(1) + t];
      }
    }
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum") {
    auto x = Tensor::from_data({3}, {0.3, -2, 5}, true);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(x));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) ==
          std::vector<double>{1, 1, 1});
  }
  SUBCASE("power rule") {
    auto x = Tensor::scalar(3.0, true);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(mul(x, x));
    CHECK(x.grad()[0] == 6.0);
  }
  SUBCASE("non-scalar loss") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    Tape tape;
    TapeScope scope(tape);
    CHECK_THROWS_AS(tape.backward(scale(x, 2.0)), tse::DimensionError);
  }
  SUBCASE("twice without reset") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    Tape tape;
    TapeScope scope(tape);
    auto loss = sum(mul(x, x));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), tse::Error);
    tape.reset();
    x.zero_grad();
    auto again = sum(mul(x, x));
    tape.backward(again);
    CHECK(x.grad()[1] == 4.0);
  }
  SUBCASE("detached graph") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    auto untracked = sum(x);  // no active tape
    Tape tape;
    CHECK_THROWS_AS(tape.backward(untracked), tse::Error);
    Tape other;
    Tensor on_other;
    {
      TapeScope scope(other);
      on_other = sum(mul(x, x));
    }
    CHECK_THROWS_AS(tape.backward(on_other), tse::Error);
  }
  SUBCASE("every reachable requires_grad tensor gets a grad") {
    auto w = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    auto x = Tensor::from_data({1, 2}, {1, -1});
    Tape tape;
    TapeScope scope(tape);
    auto h = matmul(x, w);
    auto y = relu(h);
    tape.backward(sum(y));
    CHECK(h.has_grad());
    CHECK(y.has_grad());
    CHECK(w.has_grad());
    CHECK_FALSE(x.has_grad());
    CHECK(tape.size() == 3);
  }
}

TEST_CASE("tape visits every node once in reverse order") {
  auto x = Tensor::from_data({2}, {0.5, 1.5}, true);
  Tape tape;
  TapeScope scope(tape);
  auto a = exp(x);
  auto b = mul(a, a);
  auto c = sum(b);
  CHECK(tape.op_names() == std::vector<std::string>{"exp", "mul", "sum"});
  tape.backward(c);
  // d/dx exp(2x) = 2 exp(2x)
  CHECK(x.grad()[0] == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-14));
}

TEST_CASE("finite-difference agreement, 20 random instances per op") {
  std::mt19937_64 rng(2026);
  const int instances = 20;
  auto proj = [](std::uint64_t seed) {
    return [seed](const Tensor& t) { return random_projection(t, seed); };
  };
  for (int i = 0; i < instances; ++i) {
    auto p = proj(1000 + i);
    const std::size_t m = 1 + i % 3, k = 2 + i % 4, n = 1 + (i + 1) % 3;
    check_op([&](const auto& v) { return p(add(v[0], v[1])); },
             {uniform({m, k}, rng), uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(sub(v[0], v[1])); },
             {uniform({m, k}, rng), uniform({}, rng)});
    check_op([&](const auto& v) { return p(mul(v[0], v[1])); },
             {uniform({k}, rng), uniform({k}, rng)});
    check_op([&](const auto& v) { return p(mul(v[0], v[1])); },
             {uniform({}, rng), uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(div(v[0], v[1])); },
             {uniform({k}, rng), uniform({k}, rng, 0.5, 1.5)});
    check_op([&](const auto& v) { return p(scale(v[0], -1.7)); },
             {uniform({k}, rng)});
    check_op([&](const auto& v) { return p(relu(v[0])); },
             {away_from_zero({m, k}, rng)});
    check_op([&](const auto& v) { return p(sigmoid(v[0])); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(exp(v[0])); }, {uniform({k}, rng)});
    check_op([&](const auto& v) { return p(log(v[0])); },
             {uniform({k}, rng, 0.2, 1.0)});
    check_op([&](const auto& v) { return mul(sum(v[0]), sum(v[0])); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return mul(mean(v[0]), mean(v[0])); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(matmul(v[0], v[1])); },
             {uniform({m, k}, rng), uniform({k, n}, rng)});
    check_op([&](const auto& v) { return p(bmm(v[0], v[1])); },
             {uniform({2, m, k}, rng), uniform({2, k, n}, rng)});
    check_op([&](const auto& v) { return p(bmm(v[0], v[1], true)); },
             {uniform({2, m, k}, rng), uniform({2, n, k}, rng)});
    check_op([&](const auto& v) { return p(add_rowvec(v[0], v[1])); },
             {uniform({m, 2, k}, rng), uniform({k}, rng)});
    check_op([&](const auto& v) { return p(linear(v[0], v[1], v[2])); },
             {uniform({m, k}, rng), uniform({k, n}, rng), uniform({n}, rng)});
    check_op([&](const auto& v) { return p(softmax(v[0], -1)); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(softmax(v[0], 0)); },
             {uniform({m + 1, k}, rng)});
    check_op([&](const auto& v) { return p(layernorm(v[0], v[1], v[2], 1e-8)); },
             {uniform({m, k}, rng), uniform({k}, rng), uniform({k}, rng)});
    const std::vector<std::size_t> labels{0, (k - 1) % k, 1 % k};
    check_op(
        [&](const auto& v) {
          return cross_entropy(v[0], std::span(labels.data(), m));
        },
        {uniform({m, k}, rng)});
    const std::size_t kw = 2 + i % 3, stride = 1 + i % 3, dil = 1 + i % 2;
    const std::size_t len = dil * (kw - 1) + 1 + stride * (1 + i % 4);
    check_op([&](const auto& v) { return p(conv1d(v[0], v[1], stride, dil)); },
             {uniform({m, len}, rng), uniform({n, m, kw}, rng)});
    check_op(
        [&](const auto& v) { return p(conv1d_transpose(v[0], v[1], stride)); },
        {uniform({m, std::size_t(3 + i % 3)}, rng), uniform({m, n, kw}, rng)});
    check_op([&](const auto& v) { return p(reshape(v[0], {k, m})); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(permute(v[0], {2, 0, 1})); },
             {uniform({m, k, n}, rng)});
    check_op([&](const auto& v) { return p(transpose(v[0])); },
             {uniform({m, k}, rng)});
    check_op([&](const auto& v) { return p(resize_last(v[0], k + 1 - i % 3)); },
             {uniform({m, k}, rng)});
  }
}

TEST_CASE("execution is deterministic") {
  auto run = []() {
    std::mt19937_64 rng(99);
    auto w = uniform({5, 4}, rng);
    w.set_requires_grad(true);
    auto x = uniform({3, 5}, rng);
    Tape tape;
    TapeScope scope(tape);
    auto loss = sum(softmax(relu(matmul(x, w))));
    tape.backward(loss);
    auto out = w.to_vector();
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient fault injection is visible to the checker") {
  std::mt19937_64 rng(5);
  auto x = uniform({4}, rng, 0.2, 1.0);
  LossFn f = [](const auto& v) { return random_projection(exp(v[0]), 3); };
  CHECK(compare_gradients(f, {x}).relative_error < 1e-6);
  set_gradient_fault("exp", 1.5);
  CHECK(compare_gradients(f, {x}).relative_error > 0.1);
  set_gradient_fault("", 1.0);
}
