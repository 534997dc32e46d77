#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>

#include "hgfrenet/data.hpp"
#include "hgfrenet/error.hpp"

using namespace hgf;
using namespace hgf::data;
namespace fs = std::filesystem;

namespace {

const auto kGraph = skeleton::h36m_skeleton();
const auto kRest = h36m_rest_pose();

double dist(const Tensor& p, std::size_t t, std::size_t a, std::size_t b) {
  const std::size_t n = p.dim(1);
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double d = p[(t * n + a) * 3 + c] - p[(t * n + b) * 3 + c];
    s += d * d;
  }
  return std::sqrt(s);
}

MotionSpec still_spec() {
  MotionSpec s;
  s.joint_angles.resize(17);
  return s;
}

std::size_t hash_tensor(const Tensor& t) {
  std::size_t h = 0;
  for (double v : t.data()) h = h * 1000003u ^ std::hash<double>{}(v);
  return h;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hgf_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("zero amplitudes give a static pose") {
  const auto seq = generate_motion(kGraph, kRest, 5, 50.0, still_spec());
  CHECK(seq.values.shape() == Shape{5, 17, 3});
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t i = 0; i < 17 * 3; ++i) CHECK(seq.values[t * 51 + i] == seq.values[i]);
}

TEST_CASE("bone lengths are constant and generation is seeded") {
  const auto seq = generate_motion(kGraph, kRest, 40, 50.0, 11);
  double worst = 0.0;
  for (auto [a, b] : kGraph.edges) {
    const double l0 = dist(seq.values, 0, a, b);
    for (std::size_t t = 1; t < 40; ++t) worst = std::max(worst, std::abs(dist(seq.values, t, a, b) - l0));
  }
  CHECK(worst < 1e-9);
  CHECK(hash_tensor(generate_motion(kGraph, kRest, 40, 50.0, 11).values) == hash_tensor(seq.values));
  std::set<std::size_t> hashes;
  for (std::uint64_t s = 0; s < 20; ++s) hashes.insert(hash_tensor(generate_motion(kGraph, kRest, 10, 50.0, s).values));
  CHECK(hashes.size() == 20);
}

TEST_CASE("a rotating elbow moves the wrist on a circle") {
  auto spec = still_spec();
  const double amp = 1.3, freq = 2.0;
  spec.joint_angles[15][2] = {0.0, amp, freq, 0.0};  // r_elbow about z
  const double fps = 50.0;
  const auto seq = generate_motion(kGraph, kRest, 30, fps, spec);
  const auto& off = kRest.offsets[16];
  const double r = std::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
  for (std::size_t t = 0; t < 30; ++t) {
    const double theta = amp * std::sin(2.0 * std::numbers::pi * freq * t / fps);
    const double dx = seq.values.at({t, 16, 0}) - seq.values.at({t, 15, 0});
    const double dy = seq.values.at({t, 16, 1}) - seq.values.at({t, 15, 1});
    const double dz = seq.values.at({t, 16, 2}) - seq.values.at({t, 15, 2});
    CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) == doctest::Approx(r).epsilon(1e-12));
    CHECK(std::abs(dz) < 1e-12);
    // Rotation of the rest offset (0, r, 0) about z by theta.
    CHECK(dy == doctest::Approx(r * std::cos(theta)).epsilon(1e-10));
    CHECK(std::abs(dx) == doctest::Approx(r * std::abs(std::sin(theta))).epsilon(1e-10));
  }
}

TEST_CASE("motion spec errors") {
  auto spec = still_spec();
  spec.joint_angles[3][0].frequency_hz = -1.0;
  CHECK_THROWS_AS(generate_motion(kGraph, kRest, 5, 50.0, spec), ConfigError);
  CHECK_THROWS_AS(generate_motion(kGraph, kRest, 0, 50.0, still_spec()), ConfigError);
  auto short_spec = still_spec();
  short_spec.joint_angles.pop_back();
  CHECK_THROWS_AS(generate_motion(kGraph, kRest, 5, 50.0, short_spec), ConfigError);
}

TEST_CASE("projection") {
  Camera cam;
  PoseSequence axis;
  axis.values = Tensor(Shape{1, 2, 3});
  axis.values.at({0, 0, 2}) = 4.0;  // on the optical axis
  axis.values.at({0, 1, 0}) = 0.3;
  axis.values.at({0, 1, 1}) = -0.2;
  axis.values.at({0, 1, 2}) = 4.0;
  const auto p = project_2d(axis, cam);
  const auto pp = normalized_principal_point(cam);
  CHECK(p.values.at({0, 0, 0}) == doctest::Approx(pp[0]));
  CHECK(p.values.at({0, 0, 1}) == doctest::Approx(pp[1]));
  // Scalar oracle.
  const double u = cam.focal_x * 0.3 / 4.0 + cam.center_x;
  const double v = cam.focal_y * -0.2 / 4.0 + cam.center_y;
  CHECK(p.values.at({0, 1, 0}) == doctest::Approx(u / cam.width * 2.0 - 1.0));
  CHECK(p.values.at({0, 1, 1}) == doctest::Approx(v / cam.width * 2.0 - cam.height / cam.width));

  // Doubling depth halves the offset from the principal point.
  auto far = axis;
  far.values.at({0, 1, 2}) = 8.0;
  const auto pf = project_2d(far, cam);
  CHECK(pf.values.at({0, 1, 0}) - pp[0] == doctest::Approx((p.values.at({0, 1, 0}) - pp[0]) / 2.0));

  // Analytic inverse at known depth.
  const auto back = unproject(cam, p.values.at({0, 1, 0}), p.values.at({0, 1, 1}), 4.0);
  CHECK(std::abs(back[0] - 0.3) < 1e-6);
  CHECK(std::abs(back[1] + 0.2) < 1e-6);

  auto behind = axis;
  behind.values = Tensor(Shape{3, 2, 3}, 1.0);
  behind.values.at({2, 1, 2}) = -0.5;
  try {
    project_2d(behind, cam);
    FAIL("expected a projection error");
  } catch (const ProjectionError& e) {
    CHECK(e.frame() == 2);
  }
}

TEST_CASE("noise injection statistics") {
  const auto cfg = h36m_noise_config();
  CHECK_NOTHROW(validate_noise(cfg, 17));
  Tensor zeros(Shape{6000, 17, 3});
  std::mt19937_64 rng(1);
  const Tensor noisy = inject_noise(zeros, cfg, rng);
  CHECK(zeros[0] == 0.0);  // input untouched
  auto std_of = [&](std::size_t joint) {
    double s = 0.0, s2 = 0.0;
    const double n = 6000.0 * 3.0;
    for (std::size_t t = 0; t < 6000; ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = noisy.at({t, joint, c});
        s += v;
        s2 += v * v;
      }
    return std::sqrt(s2 / n - (s / n) * (s / n));
  };
  // 18000 samples per joint; the groups pool several joints for tighter checks below.
  CHECK(std_of(16) == doctest::Approx(0.2).epsilon(0.03));
  CHECK(std_of(0) == doctest::Approx(0.002).epsilon(0.03));

  Tensor big(Shape{34000, 17, 3});
  std::mt19937_64 rng2(2);
  const Tensor nb = inject_noise(big, cfg, rng2);
  double s2_terminal = 0.0, s2_torso = 0.0;
  for (std::size_t t = 0; t < 34000; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      s2_terminal += nb.at({t, 3, c}) * nb.at({t, 3, c});
      s2_torso += nb.at({t, 7, c}) * nb.at({t, 7, c});
    }
  CHECK(std::abs(std::sqrt(s2_terminal / 102000.0) - 0.2) < 0.01);
  CHECK(std::abs(std::sqrt(s2_torso / 102000.0) - 0.002) < 1e-4);

  std::mt19937_64 a(5), b(5);
  const Tensor x = generate_motion(kGraph, kRest, 4, 50.0, 3).values;
  CHECK(max_abs_diff(inject_noise(x, cfg, a), inject_noise(x, cfg, b)) == 0.0);
  NoiseConfig none = cfg;
  none.stddevs = {0, 0, 0, 0};
  CHECK(max_abs_diff(inject_noise(x, none, a), x) == 0.0);

  NoiseConfig overlap = cfg;
  overlap.groups[0].push_back(1);
  CHECK_THROWS_AS(validate_noise(overlap, 17), ConfigError);
  NoiseConfig negative = cfg;
  negative.stddevs[1] = -0.1;
  CHECK_THROWS_AS(validate_noise(negative, 17), ConfigError);
  CHECK_THROWS_AS(validate_noise(cfg, 16), ConfigError);
}

TEST_CASE("concat and split") {
  PoseSequence a, b;
  a.values = Tensor(Shape{27, 17, 2});
  b.values = Tensor(Shape{27, 17, 3});
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = 100.0 + i;
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = -1.0 - i;
  const auto c = concat_2d3d(a, b);
  CHECK(c.values.shape() == Shape{27, 17, 5});
  CHECK(c.values.at({3, 4, 0}) == a.values.at({3, 4, 0}));
  CHECK(c.values.at({3, 4, 1}) == a.values.at({3, 4, 1}));
  CHECK(c.values.at({3, 4, 2}) == b.values.at({3, 4, 0}));
  CHECK(c.values.at({3, 4, 4}) == b.values.at({3, 4, 2}));
  const auto [a2, b2] = split_2d3d(c);
  CHECK(max_abs_diff(a2.values, a.values) == 0.0);
  CHECK(max_abs_diff(b2.values, b.values) == 0.0);
  PoseSequence wrong;
  wrong.values = Tensor(Shape{26, 17, 3});
  CHECK_THROWS_AS(concat_2d3d(a, wrong), ShapeError);
}

TEST_CASE("sequence files") {
  const fs::path dir = scratch("files");
  auto seq = generate_motion(kGraph, kRest, 9, 25.0, 4);
  write_sequence(seq, dir / "a.pseq");
  const auto back = read_sequence(dir / "a.pseq");
  CHECK(back.fps == 25.0);
  for (std::size_t i = 0; i < seq.values.size(); ++i)
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(seq.values[i])));
  write_sequence(back, dir / "b.pseq");
  CHECK(max_abs_diff(read_sequence(dir / "b.pseq").values, back.values) == 0.0);

  {
    std::ifstream in(dir / "a.pseq", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes.substr(0, 5) == "PSEQ1");
    CHECK(bytes.size() == 5 + 12 + 8 + 9 * 17 * 3 * 4);
    std::ofstream(dir / "trunc.pseq", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
    std::ofstream(dir / "short.pseq", std::ios::binary) << bytes.substr(0, 9);
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "magic.pseq", std::ios::binary) << bad;
    std::string huge = bytes;
    const std::uint32_t big = 0x7fffffffu;
    std::memcpy(&huge[5], &big, 4);
    std::memcpy(&huge[9], &big, 4);
    std::ofstream(dir / "huge.pseq", std::ios::binary) << huge;
  }
  CHECK_THROWS_AS(read_sequence(dir / "trunc.pseq"), TruncatedError);
  CHECK_THROWS_AS(read_sequence(dir / "short.pseq"), TruncatedError);
  CHECK_THROWS_AS(read_sequence(dir / "magic.pseq"), BadMagicError);
  CHECK_THROWS_AS(read_sequence(dir / "huge.pseq"), ShapeOverflowError);
  CHECK_THROWS_AS(read_sequence(dir / "missing.pseq"), DataError);

  // Corpus round trip by checksum.
  std::size_t before = 0, after = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto x = generate_motion(kGraph, kRest, 6, 50.0, s);
    for (auto& v : x.values.data()) v = static_cast<float>(v);
    before ^= hash_tensor(x.values) + s;
    write_sequence(x, dir / ("c" + std::to_string(s) + ".pseq"));
  }
  for (std::uint64_t s = 0; s < 100; ++s) after ^= hash_tensor(read_sequence(dir / ("c" + std::to_string(s) + ".pseq")).values) + s;
  CHECK(before == after);

  write_csv(seq, dir / "a.csv");
  std::ifstream csv(dir / "a.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("j0_x,j0_y,j0_z,j1_x", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("datasets") {
  const fs::path dir = scratch("dataset");
  DatasetConfig cfg;
  cfg.count = 5;
  cfg.frames = 12;
  cfg.seed = 3;
  const auto samples = generate_dataset(kGraph, kRest, cfg);
  REQUIRE(samples.size() == 5);
  CHECK(samples[1].seed == 4);
  CHECK(samples[0].pose2d.values.shape() == Shape{12, 17, 2});
  for (std::size_t t = 0; t < 12; ++t)
    for (std::size_t c = 0; c < 3; ++c) CHECK(samples[2].pose3d.values.at({t, 0, c}) == 0.0);
  save_dataset(samples, cfg, dir);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 5);
  CHECK(loaded[4].action == samples[4].action);
  CHECK(max_abs_diff(loaded[3].pose2d.values, samples[3].pose2d.values) < 1e-6);

  const auto [train, val] = split_train_val(samples);
  CHECK(train.size() == 4);
  CHECK(val.size() == 1);
  CHECK(val[0].seed == samples[4].seed);

  fs::remove(dir / "manifest.json");
  CHECK_THROWS_AS(load_dataset(dir), DataError);
  fs::remove_all(dir);

  cfg.count = 0;
  CHECK_THROWS_AS(generate_dataset(kGraph, kRest, cfg), ConfigError);
}
