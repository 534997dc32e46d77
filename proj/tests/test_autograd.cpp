#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hgfrenet/autograd.hpp"
#include "hgfrenet/error.hpp"
#include "hgfrenet/gradcheck.hpp"
#include "hgfrenet/init.hpp"
#include "hgfrenet/ops.hpp"
#include "hgfrenet/parameters.hpp"

using namespace hgf;

namespace {

Tensor rand_t(Shape s, std::uint64_t seed, double std = 1.0) {
  std::mt19937_64 rng(seed);
  return init::normal(std::move(s), std, rng);
}

// Random projection of the last axis followed by a sum, so that ops whose
// plain sum is constant (softmax, layer norm) still get a useful check.
Var probe(const Var& y, std::uint64_t seed) {
  const Var w(rand_t(Shape{y.shape().back(), 1}, seed));
  return ops::sum(ops::linear(y, w));
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.at({1, 2}) == 6.0);
  CHECK(t.rows() == 2);
  CHECK(t.reshaped(Shape{3, 2}).at({2, 1}) == 6.0);
  CHECK_THROWS_AS(t.reshaped(Shape{4}), ShapeError);
  CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("backward through a shared subexpression accumulates") {
  Var x(Tensor(Shape{1}, 3.0), true);
  Var y = ops::add(x, x);            // 2x
  Var z = ops::add(y, ops::scale(x, 4.0));  // 6x
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("NoGradGuard stops recording") {
  Var x(Tensor(Shape{2}, 1.0), true);
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    Var y = ops::scale(x, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("elementwise and linear gradients") {
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::sub(ops::add(v[0], v[1]), v[1]), 1); },
                   {rand_t({3, 4}, 1), rand_t({3, 4}, 2)})
            .max_rel_error < 1e-6);
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::add_trailing(v[0], v[1]), 2); },
                   {rand_t({2, 3, 4}, 3), rand_t({3, 4}, 4)})
            .max_rel_error < 1e-6);
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::linear(v[0], v[1], v[2]), 3); },
                   {rand_t({2, 5, 6}, 5), rand_t({6, 7}, 6), rand_t({7}, 7)})
            .max_rel_error < 1e-6);
}

TEST_CASE("softmax, layer norm and GELU gradients") {
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::softmax_rows(v[0]), 4); }, {rand_t({4, 6}, 8)})
            .max_rel_error < 1e-6);
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::layer_norm(v[0], v[1], v[2]), 5); },
                   {rand_t({3, 8}, 9), rand_t({8}, 10), rand_t({8}, 11)})
            .max_rel_error < 1e-5);
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::gelu(v[0]), 6); }, {rand_t({5, 5}, 12)})
            .max_rel_error < 1e-6);
}

TEST_CASE("batch norm gradient and running statistics") {
  Tensor mean(Shape{4}), var(Shape{4}, 1.0);
  auto op = [&](const std::vector<Var>& v) {
    return probe(ops::batch_norm(v[0], v[1], v[2], {mean, var, true}), 7);
  };
  CHECK(grad_check(op, {rand_t({2, 3, 4}, 13), rand_t({4}, 14), rand_t({4}, 15)}).max_rel_error < 1e-5);

  // Running statistics move towards the batch statistics by the momentum.
  Tensor m(Shape{1}), v(Shape{1}, 1.0);
  const Tensor x(Shape{4, 1}, std::vector<double>{1, 2, 3, 4});
  ops::batch_norm(Var(x), Var(Tensor(Shape{1}, 1.0)), Var(Tensor(Shape{1})), {m, v, true, 0.1});
  CHECK(m[0] == doctest::Approx(0.25));
  CHECK(v[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
  // Eval mode uses the running statistics and leaves them unchanged.
  Tensor m2(Shape{1}, 1.0), v2(Shape{1}, 4.0);
  const Var y = ops::batch_norm(Var(x), Var(Tensor(Shape{1}, 1.0)), Var(Tensor(Shape{1})), {m2, v2, false});
  CHECK(y.value()[0] == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(y.value()[3] == doctest::Approx(3.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(m2[0] == 1.0);
}

TEST_CASE("attention, joint mix and reshaping gradients") {
  CHECK(grad_check(
            [](const std::vector<Var>& v) { return probe(ops::attention(v[0], v[1], v[2], 2, 0.5), 8); },
            {rand_t({2, 3, 4}, 16), rand_t({2, 5, 4}, 17), rand_t({2, 5, 6}, 18)})
            .max_rel_error < 1e-6);
  // q, k and v may alias.
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::attention(v[0], v[0], v[0], 2, 0.7), 9); },
                   {rand_t({3, 4, 4}, 19)})
            .max_rel_error < 1e-6);
  CHECK(grad_check([](const std::vector<Var>& v) { return probe(ops::joint_mix(v[0], v[1]), 10); },
                   {rand_t({3, 3}, 20), rand_t({2, 2, 3, 4}, 21)})
            .max_rel_error < 1e-6);
  CHECK(grad_check(
            [](const std::vector<Var>& v) {
              return probe(ops::concat_last({ops::slice_last(v[0], 1, 2), ops::swap_axes_12(v[1])}), 11);
            },
            {rand_t({2, 3, 2, 4}, 22), rand_t({2, 2, 3, 5}, 23)})
            .max_rel_error < 1e-6);
}

TEST_CASE("scaled dot attention by hand") {
  // One query against two keys: weights softmax([0, 1] / sqrt(1)).
  const Var q(Tensor(Shape{1, 1}, 1.0));
  const Var k(Tensor(Shape{2, 1}, std::vector<double>{0.0, 1.0}));
  const Var v(Tensor(Shape{2, 1}, std::vector<double>{10.0, 20.0}));
  const double w1 = std::exp(1.0) / (1.0 + std::exp(1.0));
  CHECK(ops::scaled_dot_attention(q, k, v).value()[0] == doctest::Approx(10.0 * (1 - w1) + 20.0 * w1));
}

TEST_CASE("attention observer sees normalized rows") {
  std::size_t calls = 0;
  double worst = 0.0;
  {
    ops::AttentionObserverScope scope([&](std::string_view, const Tensor& p) {
      ++calls;
      const std::size_t m = p.shape().back();
      for (std::size_t r = 0; r < p.size() / m; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += p[r * m + j];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    });
    const Var x(rand_t({2, 5, 8}, 24));
    ops::attention(x, x, x, 4, 1.0);
  }
  CHECK(calls == 1);
  CHECK(worst < 1e-12);
}

TEST_CASE("dropout keeps expectation and is identity at p = 0") {
  std::mt19937_64 rng(1);
  const Var x(Tensor(Shape{20000}, 1.0));
  CHECK(ops::dropout(x, 0.0, rng).value()[7] == 1.0);
  const Var y = ops::dropout(x, 0.25, rng);
  double s = 0.0;
  std::size_t zeros = 0;
  for (double v : y.value().data()) {
    s += v;
    zeros += v == 0.0;
  }
  CHECK(s / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
  CHECK(static_cast<double>(zeros) / 20000.0 == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("checkpoint round trip and error reporting") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hgf_test_ckpt";
  fs::create_directories(dir);
  ParameterSet a;
  a.add("w", rand_t({3, 4}, 25));
  a.add_buffer("stat", rand_t({4}, 26));
  save_checkpoint(a, dir / "a.hgfw");

  ParameterSet b;
  b.add("w", Tensor(Shape{3, 4}));
  b.add_buffer("stat", Tensor(Shape{4}));
  load_checkpoint(b, dir / "a.hgfw");
  round_to_checkpoint_precision(a);
  CHECK(max_abs_diff(a.find("w")->var.value(), b.find("w")->var.value()) == 0.0);
  CHECK(max_abs_diff(a.find("stat")->var.value(), b.find("stat")->var.value()) == 0.0);
  CHECK(a.trainable_count() == 12);

  ParameterSet wrong;
  wrong.add("w", Tensor(Shape{4, 3}));
  wrong.add_buffer("stat", Tensor(Shape{4}));
  CHECK_THROWS_AS(load_checkpoint(wrong, dir / "a.hgfw"), DataError);

  {
    std::ofstream f(dir / "bad.hgfw", std::ios::binary);
    f << "NOPE!";
  }
  CHECK_THROWS_AS(load_checkpoint(b, dir / "bad.hgfw"), DataError);
  CHECK_THROWS_AS(a.add("w", Tensor(Shape{1})), ConfigError);
  fs::remove_all(dir);
}
