#include <doctest.h>

#include <cmath>
#include <random>

#include "hgfrenet/data.hpp"
#include "hgfrenet/error.hpp"
#include "hgfrenet/gradcheck.hpp"
#include "hgfrenet/init.hpp"
#include "hgfrenet/network.hpp"
#include "hgfrenet/ops.hpp"
#include "hgfrenet/skeleton.hpp"

using namespace hgf;
using namespace hgf::net;

namespace {

Tensor rand_t(Shape s, std::uint64_t seed, double std = 1.0) {
  std::mt19937_64 rng(seed);
  return init::normal(std::move(s), std, rng);
}

skeleton::SkeletonGraph chain3() {
  skeleton::SkeletonGraph g;
  g.joint_count = 3;
  g.edges = {{0, 1}, {1, 2}};
  g.joint_names = {"a", "b", "c"};
  return g;
}

ModelConfig tiny_config(std::size_t cin) {
  ModelConfig c;
  c.frames = 3;
  c.joints = 3;
  c.channels_in = cin;
  c.embed_dim = 4;
  c.depth = 1;
  c.spatial_heads = 2;
  c.temporal_heads = 2;
  c.hga_heads = 2;
  c.dropout = 0.0;
  return c;
}

// Zeroes every trainable tensor under prefix except LN/BN gammas.
void zero_block(ParameterSet& ps, const std::string& prefix) {
  for (const auto& e : ps.entries()) {
    if (!e.trainable || e.name.rfind(prefix, 0) != 0) continue;
    Var v = e.var;
    const bool gamma = e.name.find("gamma") != std::string::npos;
    v.mutable_value().fill(gamma ? 1.0 : 0.0);
  }
}

bool same(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && max_abs_diff(a, b) == 0.0; }

}  // namespace

TEST_CASE("embedding") {
  const Tensor x = rand_t({27, 17, 5}, 1);
  const Var w(rand_t({5, 64}, 2));
  CHECK(embed_input(Var(x), w).shape() == Shape{27, 17, 64});
  CHECK(max_abs_diff(embed_input(Var(Tensor(Shape{27, 17, 5})), w).value(), Tensor(Shape{27, 17, 64})) == 0.0);
  Tensor eye(Shape{5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0;
  CHECK(max_abs_diff(embed_input(Var(x), Var(eye)).value(), x) == 0.0);
  CHECK_THROWS_AS(embed_input(Var(rand_t({27, 17, 2}, 3)), w), ShapeError);
}

TEST_CASE("spatial block") {
  ModelConfig cfg;
  cfg.embed_dim = 32;
  cfg.dropout = 0.0;
  const Model m(cfg, skeleton::h36m_skeleton(), 4);
  const Tensor x = rand_t({1, 4, 17, 32}, 5);
  const auto& sp = m.spatial_blocks()[0];
  CHECK(spatial_block_forward(Var(x), sp, m.skeletal_adjacency(), 0.0, {}).shape() == Shape{1, 4, 17, 32});

  // The HGA residual adds layer-normalised features, so a zeroed block
  // reproduces an input that is already normalised per token.
  Model z(cfg, skeleton::h36m_skeleton(), 4);
  zero_block(z.parameters(), "block0.spatial.");
  Tensor xn = x;
  for (std::size_t r = 0; r < xn.size() / 32; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 32; ++c) mean += xn[r * 32 + c] / 32.0;
    for (std::size_t c = 0; c < 32; ++c) var += (xn[r * 32 + c] - mean) * (xn[r * 32 + c] - mean) / 32.0;
    for (std::size_t c = 0; c < 32; ++c) xn[r * 32 + c] = (xn[r * 32 + c] - mean) / std::sqrt(var);
  }
  const Tensor y = spatial_block_forward(Var(xn), z.spatial_blocks()[0], z.skeletal_adjacency(), 0.0, {}).value();
  CHECK(max_abs_diff(y, xn) < 1e-4);
}

TEST_CASE("temporal block") {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.dropout = 0.0;
  Model m(cfg, skeleton::h36m_skeleton(), 6);
  const Tensor x = rand_t({2, 27, 17, 16}, 7);
  CHECK(temporal_block_forward(Var(x), m.temporal_blocks()[0], Var(), 0.0, {}).shape() == x.shape());

  for (const auto& e : m.parameters().entries()) {
    if (e.name.find(".temporal.") == std::string::npos) continue;
    if (e.name.find(".W1") != std::string::npos || e.name.find(".W2") != std::string::npos ||
        e.name.find(".b1") != std::string::npos || e.name.find(".b2") != std::string::npos) {
      Var v = e.var;
      v.mutable_value().fill(0.0);
    }
  }
  Tensor still(Shape{1, 27, 17, 16});
  const Tensor frame = rand_t({17, 16}, 8);
  for (std::size_t t = 0; t < 27; ++t) std::copy(frame.ptr(), frame.ptr() + frame.size(), still.ptr() + t * frame.size());
  const Tensor y = temporal_block_forward(Var(still), m.temporal_blocks()[0], Var(), 0.0, {}).value();
  double drift = 0.0;
  for (std::size_t t = 1; t < 27; ++t)
    for (std::size_t i = 0; i < frame.size(); ++i) drift = std::max(drift, std::abs(y[t * frame.size() + i] - y[i]));
  CHECK(drift < 1e-12);
}

TEST_CASE("block gradients") {
  const auto g = chain3();
  Model m(tiny_config(5), g, 9);
  Var x(rand_t({1, 3, 3, 4}, 10), true);
  const Var w(rand_t({4, 1}, 11));
  std::vector<Var> sleaves{x}, tleaves{x};
  for (const auto& e : m.parameters().entries()) {
    if (!e.trainable) continue;
    if (e.name.find(".spatial.") != std::string::npos) sleaves.push_back(e.var);
    if (e.name.find(".temporal.") != std::string::npos) tleaves.push_back(e.var);
  }
  const ForwardContext train{true, nullptr};
  CHECK(grad_check([&] {
          return ops::sum(ops::linear(spatial_block_forward(x, m.spatial_blocks()[0], m.skeletal_adjacency(), 0.0, train), w));
        }, sleaves).max_rel_error < 1e-4);
  CHECK(grad_check([&] {
          return ops::sum(ops::linear(temporal_block_forward(x, m.temporal_blocks()[0], m.temporal_pe(), 0.0, train), w));
        }, tleaves).max_rel_error < 1e-4);
}

TEST_CASE("regression head") {
  const Tensor x = rand_t({27, 17, 64}, 12);
  CHECK(same(regression_head(Var(x), Var(Tensor(Shape{64, 3})), Var(Tensor(Shape{3}))).value(), Tensor(Shape{27, 17, 3})));
  const Tensor xs = rand_t({2, 3, 4}, 13), w = rand_t({4, 3}, 14), b = rand_t({3}, 15);
  const Tensor y = regression_head(Var(xs), Var(w), Var(b)).value();
  CHECK(y.shape() == Shape{2, 3, 3});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < 4; ++k) s += xs[r * 4 + k] * w[k * 3 + c];
      CHECK(y[r * 3 + c] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("full model shapes, determinism and errors") {
  const auto g = skeleton::h36m_skeleton();
  ModelConfig cfg;
  cfg.dropout = 0.0;
  const Model main(cfg, g, 16);
  const Tensor x5 = rand_t({27, 17, 5}, 17, 0.3);
  const Tensor a = hgfrenet_forward(Var(x5), main).value();
  CHECK(a.shape() == Shape{27, 17, 3});
  CHECK(same(hgfrenet_forward(Var(x5), main).value(), a));
  CHECK(same(main.predict(x5), a));
  CHECK_THROWS_AS(main.forward(Var(rand_t({26, 17, 5}, 1))), ShapeError);
  CHECK_THROWS_AS(main.forward(Var(rand_t({27, 17, 2}, 1))), ShapeError);

  ModelConfig pc = cfg;
  pc.channels_in = 2;
  pc.depth = 3;
  const Model pre(pc, g, 18);
  const Tensor x2 = rand_t({27, 17, 2}, 19, 0.3);
  const Tensor p = preliminary_forward(Var(x2), pre).value();
  CHECK(p.shape() == Shape{27, 17, 3});
  CHECK(same(preliminary_forward(Var(x2), pre).value(), p));
  CHECK_THROWS_AS(preliminary_forward(Var(x2), main), ConfigError);
  CHECK_THROWS_AS(hgfrenet_forward(Var(x5), pre), ConfigError);

  // Batched input is the per-sample forward stacked.
  Tensor batch(Shape{2, 27, 17, 5});
  std::copy(x5.ptr(), x5.ptr() + x5.size(), batch.ptr());
  std::copy(x5.ptr(), x5.ptr() + x5.size(), batch.ptr() + x5.size());
  const Tensor yb = main.predict(batch);
  CHECK(max_abs_diff(Tensor(Shape{27, 17, 3}, std::vector<double>(yb.ptr() + a.size(), yb.ptr() + 2 * a.size())), a) < 1e-12);
}

TEST_CASE("end-to-end gradient at tiny dimensions") {
  const auto g = chain3();
  Model m(tiny_config(5), g, 20);
  Var x(rand_t({1, 3, 3, 5}, 21), true);
  std::vector<Var> leaves{x};
  for (const auto& e : m.parameters().entries())
    if (e.trainable) leaves.push_back(e.var);
  const Var w(rand_t({3, 1}, 22));
  const auto r = grad_check([&] { return ops::sum(ops::linear(m.forward(x, {true, nullptr}), w)); }, leaves);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("pipeline configuration") {
  ModelConfig pre, main;
  pre.channels_in = 2;
  pre.depth = 3;
  CHECK_NOTHROW(validate_pipeline(pre, main));
  pre.depth = 2;
  CHECK_THROWS_AS(validate_pipeline(pre, main), ConfigError);
  pre.depth = 3;
  pre.frames = 81;
  CHECK_THROWS_AS(validate_pipeline(pre, main), ConfigError);
  pre.frames = 27;
  pre.channels_in = 5;
  CHECK_THROWS_AS(validate_pipeline(pre, main), ConfigError);

  ModelConfig bad;
  bad.embed_dim = 60;
  bad.spatial_heads = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(Model(ModelConfig{}, chain3(), 1), ConfigError);
}

TEST_CASE("config JSON") {
  ModelConfig c;
  c.embed_dim = 32;
  c.hops = 3;
  c.hop_weights = {1.0, 0.5, 0.25};
  c.lambda_f = 0.0;
  const ModelConfig back = config_from_json(config_to_json(c));
  CHECK(back.embed_dim == 32);
  CHECK(back.hop_weights == c.hop_weights);
  CHECK(back.lambda_f == 0.0);
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"embed_dims", 32}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"depth", "two"}}), ConfigError);
}

TEST_CASE("two-stage forward") {
  const auto g = skeleton::h36m_skeleton();
  ModelConfig mc;
  mc.dropout = 0.0;
  ModelConfig pc = mc;
  pc.channels_in = 2;
  pc.depth = 3;
  const Model pre(pc, g, 23), main(mc, g, 24);
  const Tensor x2 = rand_t({27, 17, 2}, 25, 0.3);

  data::NoiseConfig quiet = data::h36m_noise_config();
  for (auto& s : quiet.stddevs) s = 0.0;
  std::mt19937_64 r1(1), r2(99);
  const Tensor a = two_stage_forward(x2, pre, main, quiet, &r1).value();
  const Tensor b = two_stage_forward(x2, pre, main, quiet, &r2).value();
  CHECK(same(a, b));
  CHECK(same(two_stage_forward(x2, pre, main, quiet, nullptr).value(), a));

  // Same as running the stages by hand on (u, v, x, y, z).
  const Tensor p3 = pre.predict(x2);
  const Tensor x5 = data::concat_2d3d(x2, p3);
  CHECK(x5.dim(2) == 5);
  CHECK(x5.at({3, 4, 0}) == x2.at({3, 4, 0}));
  CHECK(x5.at({3, 4, 1}) == x2.at({3, 4, 1}));
  CHECK(x5.at({3, 4, 4}) == p3.at({3, 4, 2}));
  CHECK(same(main.predict(x5), a));

  std::mt19937_64 r3(5);
  const Tensor noisy = two_stage_forward(x2, pre, main, data::h36m_noise_config(), &r3).value();
  CHECK(max_abs_diff(noisy, a) > 0.0);

  data::NoiseConfig missing = data::h36m_noise_config();
  missing.groups.back().pop_back();
  CHECK_THROWS_AS(two_stage_forward(x2, pre, main, missing, &r1), ConfigError);
}

TEST_CASE("activations stay finite") {
  const auto g = skeleton::h36m_skeleton();
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.spatial_heads = 4;
  cfg.temporal_heads = 4;
  cfg.frames = 9;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const Model m(cfg, g, 100 + trial);
    std::mt19937_64 rng(trial);
    const Tensor y = m.forward(Var(rand_t({9, 17, 5}, 200 + trial)), {true, &rng}).value();
    REQUIRE(y.all_finite());
  }
}

TEST_CASE("parameter counts at full scale") {
  const auto g = skeleton::h36m_skeleton();
  ModelConfig cfg;
  cfg.frames = 243;
  cfg.embed_dim = 384;
  cfg.depth = 2;
  const Model main(cfg, g, 1);
  CHECK(std::abs(static_cast<double>(main.parameter_count()) - 11.41e6) / 11.41e6 < 0.05);
  cfg.channels_in = 2;
  cfg.depth = 3;
  const Model pre(cfg, g, 2);
  CHECK(std::abs(static_cast<double>(pre.parameter_count()) - 17.06e6) / 17.06e6 < 0.05);
}
