#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hgfrenet/error.hpp"
#include "hgfrenet/frequency.hpp"
#include "hgfrenet/gradcheck.hpp"
#include "hgfrenet/init.hpp"

using namespace hgf;
using namespace hgf::freq;

namespace {

Tensor rand_t(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init::normal(std::move(s), 1.0, rng);
}

// Direct evaluation of the cosine formula, 0-based u and t.
double dct_entry(std::size_t u, std::size_t t, std::size_t n) {
  const double s = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
  return s * std::cos(std::numbers::pi * (2.0 * t + 1.0) * u / (2.0 * n));
}

// The 2-sample case: x-trajectory [0, 1], everything else zero.
Tensor two_sample_target() {
  Tensor y(Shape{2, 1, 3});
  y.at({1, 0, 0}) = 1.0;
  return y;
}

double loss_value(const Tensor& y_hat, const Tensor& y, const FreqLossConfig& cfg) {
  return freq_loss(Var(y_hat), y, cfg).value()[0];
}

}  // namespace

TEST_CASE("DCT matrix") {
  CHECK_THROWS_AS(dct_matrix(0), ConfigError);
  CHECK(dct_matrix(1).matrix[0] == doctest::Approx(1.0));
  const auto b4 = dct_matrix(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < 4; ++t) s += b4.matrix[i * 4 + t] * b4.matrix[j * 4 + t];
      CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
  const auto b8 = dct_matrix(8);
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t t = 0; t < 8; ++t) CHECK(b8.matrix[u * 8 + t] == doctest::Approx(dct_entry(u, t, 8)).epsilon(1e-14));
  for (std::size_t t = 0; t < 8; ++t) CHECK(b8.matrix[t] == doctest::Approx(std::sqrt(1.0 / 8)));
  CHECK(&dct_basis(27) == &dct_basis(27));
}

TEST_CASE("DCT forward and inverse") {
  const auto& b = dct_basis(4);
  const Tensor c = dct_forward(Tensor(Shape{4}, 2.0), b);
  CHECK(c[0] == doctest::Approx(4.0));
  for (std::size_t u = 1; u < 4; ++u) CHECK(std::abs(c[u]) < 1e-14);

  for (std::size_t n : {1, 2, 8, 27, 243}) {
    const Tensor x = rand_t({n}, n);
    const auto& basis = dct_basis(n);
    const Tensor coeffs = dct_forward(x, basis);
    CHECK(max_abs_diff(dct_inverse(coeffs, basis), x) < 1e-9);
    CHECK(max_abs_diff(dct_forward(dct_inverse(x, basis), basis), x) < 1e-9);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e1 += x[i] * x[i];
      e2 += coeffs[i] * coeffs[i];
    }
    CHECK(std::sqrt(e1) == doctest::Approx(std::sqrt(e2)).epsilon(1e-12));
  }

  const Tensor sig = rand_t({16}, 99);
  const Tensor fast = dct_forward(sig, dct_basis(16));
  for (std::size_t u = 0; u < 16; ++u) {
    double s = 0.0;
    for (std::size_t t = 0; t < 16; ++t) s += dct_entry(u, t, 16) * sig[t];
    CHECK(std::abs(fast[u] - s) < 1e-9);
  }

  // [T, K] columns are transformed independently.
  const Tensor m = rand_t({8, 3}, 5);
  const Tensor mc = dct_forward(m, dct_basis(8));
  Tensor col(Shape{8});
  for (std::size_t t = 0; t < 8; ++t) col[t] = m[t * 3 + 1];
  const Tensor cc = dct_forward(col, dct_basis(8));
  for (std::size_t u = 0; u < 8; ++u) CHECK(mc[u * 3 + 1] == doctest::Approx(cc[u]).epsilon(1e-13));
  CHECK_THROWS_AS(dct_forward(Tensor(Shape{5}), dct_basis(4)), ShapeError);
}

TEST_CASE("lowpass keeps constants and removes high frequencies") {
  Tensor poses(Shape{8, 2, 3}, 0.7);
  CHECK(max_abs_diff(lowpass(poses, 1), poses) < 1e-12);
  const Tensor r = rand_t({8, 2, 3}, 6);
  CHECK(max_abs_diff(lowpass(r, 8), r) < 1e-12);
}

TEST_CASE("vector-mode frequency loss hand values") {
  const Tensor y = two_sample_target();
  const Tensor zero(Shape{2, 1, 3});
  FreqLossConfig cfg;
  CHECK(loss_value(zero, y, cfg) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(loss_value(y, y, cfg) == 0.0);
  CHECK(loss_value(y, zero, cfg) == doctest::Approx(loss_value(zero, y, cfg)));

  cfg.truncation = Truncation::TopK;
  cfg.k = 1;
  CHECK(loss_value(zero, y, cfg) == doctest::Approx(0.3536).epsilon(1e-4));
  cfg.k = 2;
  CHECK(loss_value(zero, y, cfg) == doctest::Approx(0.7071).epsilon(1e-4));
  cfg.truncation = Truncation::LowWeightedK;
  cfg.k = 1;
  cfg.down_weight = 1.0;
  CHECK(loss_value(zero, y, cfg) == doctest::Approx(0.7071).epsilon(1e-4));
  cfg.down_weight = 0.5;
  CHECK(loss_value(zero, y, cfg) == doctest::Approx((0.70710678 + 0.5 * 0.70710678) / 2).epsilon(1e-6));
}

TEST_CASE("spatial-axis frequency loss hand value") {
  const Tensor y = two_sample_target();
  const Tensor zero(Shape{2, 1, 3});
  CHECK(freq_loss_spatial_axis(Var(zero), y, {}).value()[0] == doctest::Approx(0.3333).epsilon(1e-4));
  FreqLossConfig cfg;
  cfg.mode = Mode::SpatialAxis;
  CHECK(freq_loss(Var(zero), y, cfg).value()[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("frequency loss invariances and configuration errors") {
  const Tensor a = rand_t({9, 4, 3}, 7), b = rand_t({9, 4, 3}, 8);
  Tensor a2 = a, b2 = b;
  for (std::size_t i = 0; i < a.size(); i += 3) {
    a2[i + 1] += 2.5;
    b2[i + 1] += 2.5;
  }
  CHECK(loss_value(a, b, {}) == doctest::Approx(loss_value(a2, b2, {})).epsilon(1e-12));

  // Coefficient-space reimplementation with joint weights.
  FreqLossConfig cfg;
  cfg.joint_weights = {1.0, 2.0, 0.5, 4.0};
  const auto& basis = dct_basis(9);
  const Tensor fa = dct_forward(a.reshaped(Shape{9, 12}), basis);
  const Tensor fb = dct_forward(b.reshaped(Shape{9, 12}), basis);
  double want = 0.0;
  for (std::size_t u = 0; u < 9; ++u)
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = fa[u * 12 + n * 3 + c] - fb[u * 12 + n * 3 + c];
        s += d * d;
      }
      want += cfg.joint_weights[n] * std::sqrt(s);
    }
  CHECK(loss_value(a, b, cfg) == doctest::Approx(want / 36.0).epsilon(1e-12));

  // Batched input averages over the batch.
  Tensor batch(Shape{2, 9, 4, 3});
  std::copy(a.data().begin(), a.data().end(), batch.ptr());
  std::copy(a.data().begin(), a.data().end(), batch.ptr() + a.size());
  Tensor target(Shape{2, 9, 4, 3});
  std::copy(b.data().begin(), b.data().end(), target.ptr());
  std::copy(b.data().begin(), b.data().end(), target.ptr() + b.size());
  CHECK(freq_loss(Var(batch), target).value()[0] == doctest::Approx(loss_value(a, b, {})));

  FreqLossConfig bad;
  bad.truncation = Truncation::TopK;
  bad.k = 10;
  CHECK_THROWS_AS(loss_value(a, b, bad), ConfigError);
  bad.truncation = Truncation::LowWeightedK;
  bad.k = 3;
  bad.down_weight = 0.0;
  CHECK_THROWS_AS(loss_value(a, b, bad), ConfigError);
  CHECK_THROWS_AS(loss_value(a, rand_t({8, 4, 3}, 1), {}), ShapeError);
}

TEST_CASE("frequency loss gradients") {
  const Tensor y = rand_t({6, 3, 3}, 9);
  FreqLossConfig cfg;
  cfg.joint_weights = {1.0, 1.5, 2.5};
  CHECK(grad_check([&](const std::vector<Var>& v) { return freq_loss(v[0], y, cfg); }, {rand_t({6, 3, 3}, 10)})
            .max_rel_error < 1e-4);
  cfg.truncation = Truncation::LowWeightedK;
  cfg.k = 2;
  CHECK(grad_check([&](const std::vector<Var>& v) { return freq_loss(v[0], y, cfg); }, {rand_t({6, 3, 3}, 11)})
            .max_rel_error < 1e-4);
  CHECK(grad_check([&](const std::vector<Var>& v) { return freq_loss_spatial_axis(v[0], y, {1.0, 2.0, 3.0}); },
                   {rand_t({6, 3, 3}, 12)})
            .max_rel_error < 1e-4);
  // Subgradient zero at exact equality.
  Var same(y, true);
  backward(freq_loss(same, y));
  for (double g : same.grad().data()) CHECK(g == 0.0);
}
