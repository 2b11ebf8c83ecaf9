#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "tabicl/errors.hpp"
#include "tabicl/grad_check.hpp"
#include "tabicl/kernels.hpp"
#include "tabicl/nn.hpp"
#include "tabicl/ops.hpp"

using namespace tabicl;

namespace {

Tensor randn(Rng& rng, Shape shape, bool grad = false) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

double max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

bool bitwise_equal(std::span<const Real> a, std::span<const Real> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Identity projections so the attention block reduces to raw attention.
MultiHeadAttention identity_attention(std::size_t d, std::size_t heads) {
  Rng rng(1);
  MultiHeadAttention m(d, heads, rng);
  for (Linear* l : {&m.q_proj, &m.k_proj, &m.v_proj, &m.out_proj}) {
    auto w = l->weight.mutable_data();
    std::fill(w.begin(), w.end(), Real(0));
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1;
  }
  return m;
}

}  // namespace

TEST_CASE("tensor basics") {
  auto t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::numeric_limits<Real>::quiet_NaN()}), NumericError);
}

TEST_CASE("linear examples") {
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto zero = Tensor::zeros({2});
  auto y = ops::linear(Tensor::from_data({2}, {1, 2}), eye, zero);
  CHECK(y.to_vector() == std::vector<Real>{1, 2});

  auto w = Tensor::from_data({1, 1}, {2});
  auto b = Tensor::from_data({1}, {1});
  CHECK(ops::linear(Tensor::from_data({1}, {3}), w, b).item() == 7);

  CHECK_THROWS_AS(ops::linear(Tensor::from_data({3}, {1, 2, 3}), eye, zero), ShapeError);
}

TEST_CASE("linear input gradient equals column sums of W") {
  Rng rng(3);
  Linear layer(3, 4, rng);
  auto x = randn(rng, {3}, true);
  ops::sum(layer(x)).backward();
  const auto w = layer.weight.data();
  for (std::size_t k = 0; k < 3; ++k) {
    double col = 0;
    for (std::size_t n = 0; n < 4; ++n) col += w[n * 3 + k];
    CHECK(x.grad()[k] == doctest::Approx(col).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm examples") {
  auto ones = Tensor::full({3}, 1), zeros = Tensor::zeros({3});
  auto y = ops::layer_norm(Tensor::from_data({3}, {5, 5, 5}), ones, zeros);
  for (Real v : y.data()) CHECK(v == 0);
  auto y2 = ops::layer_norm(Tensor::from_data({2}, {1, -1}), Tensor::full({2}, 1), Tensor::zeros({2}), Real(1e-12));
  CHECK(y2.data()[0] == doctest::Approx(1).epsilon(1e-6));
  CHECK(y2.data()[1] == doctest::Approx(-1).epsilon(1e-6));
}

TEST_CASE("softmax examples and simplex") {
  auto p = ops::softmax(Tensor::from_data({2}, {0, 0}));
  CHECK(p.data()[0] == doctest::Approx(0.5));
  auto q = ops::softmax(Tensor::from_data({2}, {Real(std::log(2.0)), 0}));
  CHECK(q.data()[0] == doctest::Approx(2.0 / 3).epsilon(1e-6));
  CHECK(q.data()[1] == doctest::Approx(1.0 / 3).epsilon(1e-6));

  Rng rng(9);
  auto x = randn(rng, {5, 7});
  std::vector<Real> shifted(x.data().begin(), x.data().end());
  for (auto& v : shifted) v += 100;
  auto a = ops::softmax(x), b = ops::softmax(Tensor::from_data({5, 7}, shifted));
  CHECK(max_abs_diff(a.data(), b.data()) < 1e-6);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(a.data()[r * 7 + c] >= 0);
      s += a.data()[r * 7 + c];
    }
    CHECK(std::abs(s - 1) < 1e-6);
  }
}

TEST_CASE("softmax_active zeroes inactive entries exactly") {
  Rng rng(2);
  auto p = ops::softmax_active(randn(rng, {3, 10}), 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 4; c < 10; ++c) CHECK(p.data()[r * 10 + c] == 0);
}

TEST_CASE("cross entropy of a uniform predictor is ln C") {
  auto logits = Tensor::zeros({4, 10});
  std::vector<int> y{0, 1, 1, 0};
  CHECK(ops::cross_entropy(logits, y, 2).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("attention with zero queries and keys averages permitted values") {
  Rng rng(4);
  const std::size_t d = 4;
  auto zeros = Tensor::zeros({1, 3, d});
  auto v = randn(rng, {1, 5, d});
  auto out = ops::attention(zeros, Tensor::zeros({1, 5, d}), v, 1, AttentionMask::keys_restricted_to(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < d; ++t) {
      double m = 0;
      for (std::size_t j = 0; j < 3; ++j) m += v.data()[j * d + t];
      CHECK(out.data()[i * d + t] == doctest::Approx(m / 3).epsilon(1e-6));
    }
}

TEST_CASE("delta mask returns the single permitted value row") {
  Rng rng(5);
  const std::size_t d = 4, nk = 4;
  auto mha = identity_attention(d, 2);
  auto q = randn(rng, {1, 2, d}), kv = randn(rng, {1, nk, d});
  std::vector<std::uint8_t> allowed(2 * nk, 0);
  allowed[0 * nk + 2] = 1;
  allowed[1 * nk + 0] = 1;
  auto out = mha(q, kv, AttentionMask::dense_mask(2, nk, allowed));
  for (std::size_t t = 0; t < d; ++t) {
    CHECK(out.data()[t] == doctest::Approx(kv.data()[2 * d + t]).epsilon(1e-6));
    CHECK(out.data()[d + t] == doctest::Approx(kv.data()[t]).epsilon(1e-6));
  }
}

TEST_CASE("masked attention equals attention over the sliced key set") {
  Rng rng(6);
  for (auto [B, Lq, Lk, D, prefix] : std::vector<std::array<std::size_t, 5>>{{1, 5, 7, 8, 3}, {3, 4, 9, 16, 5}, {2, 2, 3, 4, 1}}) {
    auto q = randn(rng, {B, Lq, D}), k = randn(rng, {B, Lk, D}), v = randn(rng, {B, Lk, D});
    auto masked = ops::attention(q, k, v, 2, AttentionMask::keys_restricted_to(prefix));
    auto sliced = ops::attention(q, ops::slice_rows(k, 0, prefix), ops::slice_rows(v, 0, prefix), 2, {});
    CHECK(max_abs_diff(masked.data(), sliced.data()) < 1e-6);

    std::vector<std::uint8_t> allowed(Lq * Lk);
    for (std::size_t i = 0; i < Lq; ++i)
      for (std::size_t j = 0; j < Lk; ++j) allowed[i * Lk + j] = j < prefix;
    auto dense = ops::attention(q, k, v, 2, AttentionMask::dense_mask(Lq, Lk, allowed));
    CHECK(max_abs_diff(masked.data(), dense.data()) < 1e-6);
  }
}

TEST_CASE("invalid attention inputs are rejected") {
  auto x = Tensor::zeros({1, 2, 6});
  CHECK_THROWS_AS(ops::attention(x, x, x, 4, {}), ShapeError);
  CHECK_THROWS_AS(ops::attention(x, x, x, 2, AttentionMask::dense_mask(2, 2, {1, 1, 0, 0})), ShapeError);
  CHECK_THROWS_AS(ops::attention(x, x, x, 2, AttentionMask::keys_restricted_to(0)), ShapeError);
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  Rng rng(8);
  for (auto [rows, in, out] : std::vector<std::array<std::size_t, 3>>{{7, 5, 3}, {33, 17, 40}, {64, 64, 64}, {1, 1, 1}}) {
    std::vector<Real> x(rows * in), w(out * in), b(out), dy(rows * out);
    for (auto* v : {&x, &w, &b, &dy})
      for (auto& e : *v) e = static_cast<Real>(rng.normal());
    std::vector<Real> y1(rows * out), y2(rows * out);
    kernels::linear_forward(x.data(), rows, in, w.data(), b.data(), out, y1.data());
    kernels::reference::linear_forward(x.data(), rows, in, w.data(), b.data(), out, y2.data());
    CHECK(bitwise_equal(y1, y2));

    std::vector<Real> dx1(rows * in, 0.5f), dx2(rows * in, 0.5f);
    kernels::linear_backward_input(dy.data(), rows, out, w.data(), in, dx1.data());
    kernels::reference::linear_backward_input(dy.data(), rows, out, w.data(), in, dx2.data());
    CHECK(bitwise_equal(dx1, dx2));

    std::vector<Real> dw1(out * in, 0.25f), dw2(out * in, 0.25f), db1(out, 1), db2(out, 1);
    kernels::linear_backward_params(dy.data(), rows, out, x.data(), in, dw1.data(), db1.data());
    kernels::reference::linear_backward_params(dy.data(), rows, out, x.data(), in, dw2.data(), db2.data());
    CHECK(bitwise_equal(dw1, dw2));
    CHECK(bitwise_equal(db1, db2));
  }
}

TEST_CASE("attention kernel agrees with the double-precision reference") {
  Rng rng(10);
  const AttentionDims dims{3, 70, 90, 16, 4};
  std::vector<Real> q(3 * 70 * 16), k(3 * 90 * 16), v(3 * 90 * 16);
  for (auto* t : {&q, &k, &v})
    for (auto& e : *t) e = static_cast<Real>(rng.normal());
  std::vector<Real> fast(q.size()), ref(q.size()), lse(3 * 4 * 70);
  const auto mask = AttentionMask::keys_restricted_to(65);
  kernels::attention_forward(q.data(), k.data(), v.data(), dims, mask, fast.data(), lse.data());
  kernels::reference::attention_forward(q.data(), k.data(), v.data(), dims, mask, ref.data());
  CHECK(max_abs_diff(fast, ref) < 1e-5);
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(12);
  auto q = randn(rng, {2, 130, 16}, true), k = randn(rng, {2, 150, 16}, true), v = randn(rng, {2, 150, 16}, true);
  Linear lin(16, 24, rng);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    for (auto* t : {&q, &k, &v}) t->zero_grad();
    auto y = ops::linear(ops::attention(q, k, v, 4, AttentionMask::keys_restricted_to(100)), lin.weight, lin.bias);
    ops::sum(ops::mul(y, y)).backward();
    std::vector<Real> all = y.to_vector();
    for (auto* t : {&q, &k, &v}) all.insert(all.end(), t->grad().begin(), t->grad().end());
    return all;
  };
  const auto one = run(1);
  const auto many = run(4);
  omp_set_num_threads(1);
  CHECK(bitwise_equal(one, many));
}

TEST_CASE("same seed and inputs give identical outputs") {
  auto build = [] {
    Rng rng(77);
    AttentionBlock block(8, 2, rng, false);
    auto x = randn(rng, {2, 6, 8});
    return block.self(x, 4).to_vector();
  };
  CHECK(bitwise_equal(build(), build()));
}

TEST_CASE("non-finite values surface as errors") {
  auto big = Tensor::from_data({1}, {Real(1e30)});
  CHECK_THROWS_AS(ops::mul(big, big), NumericError);
}

TEST_CASE("backward accumulates leaf gradients and frees interior ones") {
  auto x = Tensor::from_data({2}, {1, 2}, true);
  auto y = ops::mul(x, x);
  ops::sum(y).backward();
  CHECK(x.grad()[0] == 2);
  ops::sum(ops::mul(x, x)).backward();
  CHECK(x.grad()[1] == 8);
  x.zero_grad();
  {
    NoGradGuard guard;
    auto z = ops::mul(x, x);
    CHECK_FALSE(z.requires_grad());
  }
}

TEST_CASE("rope_rotate contract") {
  Rng rng(13);
  std::vector<Real> x(8);
  for (auto& e : x) e = static_cast<Real>(rng.normal());
  CHECK(ops::rope_rotate(x, 0.0, 100000.0) == x);
  const auto r = ops::rope_rotate(std::vector<Real>{1, 0}, std::numbers::pi / 2, 100000.0);
  CHECK(std::abs(r[0]) < 1e-6);
  CHECK(r[1] == doctest::Approx(1).epsilon(1e-6));
  CHECK_THROWS_AS(ops::rope_rotate(std::vector<Real>{1, 2, 3}, 1.0, 10.0), ShapeError);
}
