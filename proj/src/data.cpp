#include "hgfrenet/data.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "hgfrenet/error.hpp"

namespace hgf::data {

namespace {

using Mat3 = std::array<double, 9>;
using Vec3 = std::array<double, 3>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      c[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
    }
  }
  return c;
}

Vec3 rotate(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

// Rz(c) * Ry(b) * Rx(a).
Mat3 euler(double a, double b, double c) {
  const Mat3 rx{1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a)};
  const Mat3 ry{std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b)};
  const Mat3 rz{std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c), 0, 0, 0, 1};
  return mul(rz, mul(ry, rx));
}

double eval(const Sinusoid& s, double t) {
  return s.offset + s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t + s.phase);
}

// Parent of every joint and a root-first traversal order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tree_order(
    const skeleton::SkeletonGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.joint_count);
  for (const auto& [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<std::size_t> parent(g.joint_count, g.joint_count);
  std::vector<std::size_t> order;
  std::vector<bool> seen(g.joint_count, false);
  std::queue<std::size_t> q;
  q.push(g.root);
  seen[g.root] = true;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    order.push_back(u);
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        parent[v] = u;
        q.push(v);
      }
    }
  }
  if (order.size() != g.joint_count) throw StructuralError("skeleton is disconnected");
  return {parent, order};
}

std::optional<std::size_t> joint_index(const skeleton::SkeletonGraph& g, const std::string& name) {
  for (std::size_t i = 0; i < g.joint_names.size(); ++i) {
    if (g.joint_names[i] == name) return i;
  }
  return std::nullopt;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(const std::string& bytes, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return v;
}

constexpr std::string_view kSequenceMagic = "PSEQ1";

}  // namespace

RestPose h36m_rest_pose() {
  // Camera-style axes: x right, y down, z away from the camera.
  RestPose r;
  r.offsets = {
      {0.0, 0.0, 0.0},     // pelvis
      {-0.13, 0.0, 0.0},   // r_hip
      {0.0, 0.45, 0.02},   // r_knee
      {0.0, 0.44, -0.03},  // r_ankle
      {0.13, 0.0, 0.0},    // l_hip
      {0.0, 0.45, 0.02},   // l_knee
      {0.0, 0.44, -0.03},  // l_ankle
      {0.0, -0.23, 0.01},  // spine
      {0.0, -0.25, 0.0},   // thorax
      {0.0, -0.10, -0.02}, // neck
      {0.0, -0.12, 0.0},   // head
      {0.15, 0.0, 0.0},    // l_shoulder
      {0.0, 0.28, 0.0},    // l_elbow
      {0.0, 0.25, 0.0},    // l_wrist
      {-0.15, 0.0, 0.0},   // r_shoulder
      {0.0, 0.28, 0.0},    // r_elbow
      {0.0, 0.25, 0.0},    // r_wrist
  };
  return r;
}

std::string family_name(MotionFamily family) {
  switch (family) {
    case MotionFamily::Walk: return "walk";
    case MotionFamily::Wave: return "wave";
    case MotionFamily::Twist: return "twist";
    case MotionFamily::Mixed: return "mixed";
  }
  return "mixed";
}

MotionSpec random_motion_spec(const skeleton::SkeletonGraph& graph, MotionFamily family,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double two_pi = 2.0 * std::numbers::pi;

  MotionSpec spec;
  spec.action = family_name(family);
  spec.joint_angles.resize(graph.joint_count);
  // Small background motion everywhere so no two sequences coincide.
  for (std::size_t j = 0; j < graph.joint_count; ++j) {
    for (auto& s : spec.joint_angles[j]) {
      s = Sinusoid{uni(-0.1, 0.1), uni(0.0, 0.1), uni(0.2, 1.5), uni(0.0, two_pi)};
    }
  }
  spec.joint_angles[graph.root][1].offset = uni(-0.8, 0.8);

  auto set = [&](const std::string& name, int axis, Sinusoid s) {
    if (auto j = joint_index(graph, name)) spec.joint_angles[*j][static_cast<std::size_t>(axis)] = s;
  };
  const double f = uni(0.8, 1.4);
  const double ph = uni(0.0, two_pi);
  switch (family) {
    case MotionFamily::Walk:
      set("r_hip", 0, {0.0, uni(0.35, 0.55), f, ph});
      set("l_hip", 0, {0.0, uni(0.35, 0.55), f, ph + std::numbers::pi});
      set("r_knee", 0, {-0.35, uni(0.25, 0.4), f, ph + 0.5});
      set("l_knee", 0, {-0.35, uni(0.25, 0.4), f, ph + 0.5 + std::numbers::pi});
      set("r_shoulder", 0, {0.0, uni(0.2, 0.4), f, ph + std::numbers::pi});
      set("l_shoulder", 0, {0.0, uni(0.2, 0.4), f, ph});
      set("r_elbow", 0, {0.3, uni(0.1, 0.2), f, ph});
      set("l_elbow", 0, {0.3, uni(0.1, 0.2), f, ph + std::numbers::pi});
      break;
    case MotionFamily::Wave: {
      const bool left = unit(rng) < 0.5;
      const std::string side = left ? "l_" : "r_";
      const double raise = left ? -2.2 : 2.2;
      set(side + "shoulder", 2, {raise, uni(0.1, 0.3), f, ph});
      set(side + "elbow", 2, {raise * 0.3, uni(0.5, 0.8), uni(1.2, 2.0), ph});
      break;
    }
    case MotionFamily::Twist:
      set("spine", 1, {0.0, uni(0.4, 0.7), f * 0.6, ph});
      set("thorax", 1, {0.0, uni(0.2, 0.4), f * 0.6, ph + 0.3});
      set("l_shoulder", 2, {-0.4, uni(0.2, 0.4), f * 0.6, ph});
      set("r_shoulder", 2, {0.4, uni(0.2, 0.4), f * 0.6, ph});
      break;
    case MotionFamily::Mixed:
      for (std::size_t j = 0; j < graph.joint_count; ++j) {
        if (j == graph.root) continue;
        for (auto& s : spec.joint_angles[j]) {
          s = Sinusoid{uni(-0.3, 0.3), uni(0.0, 0.4), uni(0.2, 1.5), uni(0.0, two_pi)};
        }
      }
      break;
  }
  return spec;
}

PoseSequence generate_motion(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                             std::size_t frames, double fps, const MotionSpec& spec) {
  const std::size_t n = graph.joint_count;
  if (frames == 0) throw ConfigError("generate_motion: frames must be positive");
  if (!(fps > 0.0)) throw ConfigError("generate_motion: fps must be positive");
  if (rest.offsets.size() != n || spec.joint_angles.size() != n) {
    throw ConfigError("generate_motion: rest pose / motion spec sized for a different skeleton");
  }
  for (const auto& axes : spec.joint_angles) {
    for (const auto& s : axes) {
      if (s.frequency_hz < 0.0) throw ConfigError("generate_motion: negative frequency in motion spec");
      if (!std::isfinite(s.offset + s.amplitude + s.frequency_hz + s.phase)) {
        throw ConfigError("generate_motion: non-finite motion spec");
      }
    }
  }
  const auto [parent, order] = tree_order(graph);

  PoseSequence seq;
  seq.fps = fps;
  seq.values = Tensor(Shape{frames, n, 3});
  std::vector<Mat3> global(n);
  std::vector<Vec3> pos(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const double time = static_cast<double>(t) / fps;
    for (auto j : order) {
      const auto& a = spec.joint_angles[j];
      const Mat3 local = euler(eval(a[0], time), eval(a[1], time), eval(a[2], time));
      if (j == graph.root) {
        global[j] = local;
        pos[j] = {0.0, 0.0, 0.0};
      } else {
        const auto p = parent[j];
        const Vec3 off = rotate(global[p], rest.offsets[j]);
        pos[j] = {pos[p][0] + off[0], pos[p][1] + off[1], pos[p][2] + off[2]};
        global[j] = mul(global[p], local);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < 3; ++c) seq.values[(t * n + j) * 3 + c] = pos[j][c];
    }
  }
  return seq;
}

PoseSequence generate_motion(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                             std::size_t frames, double fps, std::uint64_t seed) {
  return generate_motion(graph, rest, frames, fps,
                         random_motion_spec(graph, MotionFamily::Mixed, seed));
}

PoseSequence project_2d(const PoseSequence& camera_space, const Camera& camera) {
  if (camera_space.values.rank() != 3 || camera_space.channels() != 3) {
    throw ShapeError("project_2d expects [T, N, 3], got " + shape_str(camera_space.values.shape()));
  }
  const std::size_t frames = camera_space.frames();
  const std::size_t n = camera_space.joints();
  PoseSequence out;
  out.fps = camera_space.fps;
  out.values = Tensor(Shape{frames, n, 2});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* p = camera_space.values.ptr() + (t * n + j) * 3;
      if (!(p[2] > 0.0)) {
        throw ProjectionError("joint " + std::to_string(j) + " at or behind the camera plane in frame " +
                                  std::to_string(t),
                              t);
      }
      const double u = camera.focal_x * p[0] / p[2] + camera.center_x;
      const double v = camera.focal_y * p[1] / p[2] + camera.center_y;
      out.values[(t * n + j) * 2] = u / camera.width * 2.0 - 1.0;
      out.values[(t * n + j) * 2 + 1] = v / camera.width * 2.0 - camera.height / camera.width;
    }
  }
  return out;
}

std::array<double, 3> unproject(const Camera& camera, double u, double v, double depth) {
  const double px = (u + 1.0) * camera.width / 2.0;
  const double py = (v + camera.height / camera.width) * camera.width / 2.0;
  return {(px - camera.center_x) * depth / camera.focal_x,
          (py - camera.center_y) * depth / camera.focal_y, depth};
}

std::array<double, 2> normalized_principal_point(const Camera& camera) {
  return {camera.center_x / camera.width * 2.0 - 1.0,
          camera.center_y / camera.width * 2.0 - camera.height / camera.width};
}

NoiseConfig h36m_noise_config() {
  NoiseConfig cfg;
  cfg.groups = {{0, 7, 8}, {1, 4, 9, 10, 11, 14}, {2, 5, 12, 15}, {3, 6, 13, 16}};
  cfg.stddevs = {0.002, 0.01, 0.1, 0.2};
  return cfg;
}

void validate_noise(const NoiseConfig& cfg, std::size_t joints) {
  if (cfg.groups.size() != cfg.stddevs.size()) {
    throw ConfigError("noise config has " + std::to_string(cfg.groups.size()) + " groups but " +
                      std::to_string(cfg.stddevs.size()) + " standard deviations");
  }
  std::vector<int> hits(joints, 0);
  for (const auto& g : cfg.groups) {
    for (auto j : g) {
      if (j >= joints) throw ConfigError("noise group references joint " + std::to_string(j));
      ++hits[j];
    }
  }
  for (std::size_t j = 0; j < joints; ++j) {
    if (hits[j] != 1) {
      throw ConfigError("noise groups must partition the joints; joint " + std::to_string(j) +
                        " appears " + std::to_string(hits[j]) + " times");
    }
  }
  for (double s : cfg.stddevs) {
    if (!(s >= 0.0)) throw ConfigError("noise standard deviations must be non-negative");
  }
}

Tensor inject_noise(const Tensor& poses, const NoiseConfig& cfg, std::mt19937_64& rng) {
  if (poses.rank() < 3 || poses.shape().back() != 3) {
    throw ShapeError("inject_noise expects [..., N, 3], got " + shape_str(poses.shape()));
  }
  const std::size_t n = poses.dim(poses.rank() - 2);
  validate_noise(cfg, n);
  std::vector<double> stddev(n);
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
    for (auto j : cfg.groups[g]) stddev[j] = cfg.stddevs[g];
  }
  Tensor out = poses;
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t positions = poses.size() / 3;
  for (std::size_t p = 0; p < positions; ++p) {
    const double s = stddev[p % n];
    for (std::size_t c = 0; c < 3; ++c) {
      const double z = normal(rng);
      out[p * 3 + c] += s * z;
    }
  }
  return out;
}

PoseSequence inject_noise(const PoseSequence& seq, const NoiseConfig& cfg, std::mt19937_64& rng) {
  return PoseSequence{inject_noise(seq.values, cfg, rng), seq.fps};
}

Tensor concat_2d3d(const Tensor& x2d, const Tensor& x3d) {
  if (x2d.rank() != x3d.rank() || x2d.rank() < 2 || x2d.shape().back() != 2 ||
      x3d.shape().back() != 3 ||
      !std::equal(x2d.shape().begin(), x2d.shape().end() - 1, x3d.shape().begin())) {
    throw ShapeError("concat_2d3d: " + shape_str(x2d.shape()) + " and " + shape_str(x3d.shape()) +
                     " do not match");
  }
  Shape s = x2d.shape();
  s.back() = 5;
  Tensor out(s);
  const std::size_t positions = x2d.size() / 2;
  for (std::size_t p = 0; p < positions; ++p) {
    out[p * 5] = x2d[p * 2];
    out[p * 5 + 1] = x2d[p * 2 + 1];
    out[p * 5 + 2] = x3d[p * 3];
    out[p * 5 + 3] = x3d[p * 3 + 1];
    out[p * 5 + 4] = x3d[p * 3 + 2];
  }
  return out;
}

PoseSequence concat_2d3d(const PoseSequence& seq2d, const PoseSequence& seq3d) {
  return PoseSequence{concat_2d3d(seq2d.values, seq3d.values), seq2d.fps};
}

std::pair<PoseSequence, PoseSequence> split_2d3d(const PoseSequence& seq5) {
  if (seq5.values.rank() != 3 || seq5.channels() != 5) {
    throw ShapeError("split_2d3d expects [T, N, 5], got " + shape_str(seq5.values.shape()));
  }
  const std::size_t positions = seq5.values.size() / 5;
  Tensor a(Shape{seq5.frames(), seq5.joints(), 2});
  Tensor b(Shape{seq5.frames(), seq5.joints(), 3});
  for (std::size_t p = 0; p < positions; ++p) {
    a[p * 2] = seq5.values[p * 5];
    a[p * 2 + 1] = seq5.values[p * 5 + 1];
    for (std::size_t c = 0; c < 3; ++c) b[p * 3 + c] = seq5.values[p * 5 + 2 + c];
  }
  return {PoseSequence{std::move(a), seq5.fps}, PoseSequence{std::move(b), seq5.fps}};
}

Tensor root_relative(const Tensor& poses, std::size_t root) {
  if (poses.rank() < 2) throw ShapeError("root_relative expects [..., N, C]");
  const std::size_t c = poses.shape().back();
  const std::size_t n = poses.dim(poses.rank() - 2);
  if (root >= n) throw ConfigError("root index out of range");
  Tensor out = poses;
  const std::size_t frames = poses.size() / (n * c);
  for (std::size_t f = 0; f < frames; ++f) {
    double* fr = out.ptr() + f * n * c;
    std::vector<double> r(fr + root * c, fr + root * c + c);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < c; ++k) fr[j * c + k] -= r[k];
    }
  }
  return out;
}

void write_sequence(const PoseSequence& seq, const std::filesystem::path& path) {
  if (seq.values.rank() != 3) throw ShapeError("write_sequence expects [T, N, C]");
  std::string out(kSequenceMagic);
  put_u32(out, static_cast<std::uint32_t>(seq.frames()));
  put_u32(out, static_cast<std::uint32_t>(seq.joints()));
  put_u32(out, static_cast<std::uint32_t>(seq.channels()));
  put_u64(out, std::bit_cast<std::uint64_t>(seq.fps));
  for (double v : seq.values.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write sequence file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing sequence file " + path.string());
}

PoseSequence read_sequence(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open sequence file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < kSequenceMagic.size() ||
      bytes.compare(0, kSequenceMagic.size(), kSequenceMagic) != 0) {
    throw BadMagicError(path.string() + " is not a PSEQ1 sequence file");
  }
  constexpr std::size_t header = 5 + 3 * 4 + 8;
  if (bytes.size() < header) throw TruncatedError(path.string() + ": truncated header");
  const std::uint64_t t = get_le(bytes, 5, 4);
  const std::uint64_t n = get_le(bytes, 9, 4);
  const std::uint64_t c = get_le(bytes, 13, 4);
  const double fps = std::bit_cast<double>(get_le(bytes, 17, 8));
  // Cap at 2^31 values; the u32 dims can otherwise multiply past size_t.
  constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 31;
  if (t == 0 || n == 0 || c == 0 || t > kMaxValues || n > kMaxValues || c > kMaxValues ||
      t * n > kMaxValues || t * n * c > kMaxValues) {
    throw ShapeOverflowError(path.string() + ": shape " + std::to_string(t) + "x" +
                             std::to_string(n) + "x" + std::to_string(c) + " is not representable");
  }
  if (c != 2 && c != 3 && c != 5) {
    throw DataError(path.string() + ": unsupported channel count " + std::to_string(c));
  }
  const std::uint64_t count = t * n * c;
  if (bytes.size() - header < count * 4) {
    throw TruncatedError(path.string() + ": payload holds " + std::to_string((bytes.size() - header) / 4) +
                         " of " + std::to_string(count) + " values");
  }
  PoseSequence seq;
  seq.fps = fps;
  seq.values = Tensor(Shape{t, n, c});
  for (std::size_t i = 0; i < count; ++i) {
    seq.values[i] = static_cast<double>(
        std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, header + 4 * i, 4))));
  }
  return seq;
}

void write_csv(const PoseSequence& seq, const std::filesystem::path& path) {
  const std::size_t c = seq.channels();
  static const char* k2[] = {"x", "y"};
  static const char* k3[] = {"x", "y", "z"};
  static const char* k5[] = {"u", "v", "x", "y", "z"};
  const char** names = c == 2 ? k2 : c == 3 ? k3 : c == 5 ? k5 : nullptr;
  if (!names) throw DataError("write_csv: unsupported channel count " + std::to_string(c));
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << std::setprecision(9);
  for (std::size_t j = 0; j < seq.joints(); ++j) {
    for (std::size_t k = 0; k < c; ++k) {
      if (j || k) f << ',';
      f << 'j' << j << '_' << names[k];
    }
  }
  f << '\n';
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t i = 0; i < seq.joints() * c; ++i) {
      if (i) f << ',';
      f << seq.values[t * seq.joints() * c + i];
    }
    f << '\n';
  }
}

std::vector<Sample> generate_dataset(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                                     const DatasetConfig& cfg) {
  static constexpr MotionFamily kFamilies[] = {MotionFamily::Walk, MotionFamily::Wave,
                                               MotionFamily::Twist, MotionFamily::Mixed};
  if (cfg.count == 0) throw ConfigError("generate_dataset: count must be positive");
  std::vector<Sample> samples;
  samples.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const MotionFamily family = kFamilies[i % 4];
    Sample s;
    s.action = family_name(family);
    s.seed = seed;
    s.pose3d = generate_motion(graph, rest, cfg.frames, cfg.fps, random_motion_spec(graph, family, seed));
    PoseSequence placed = s.pose3d;
    for (std::size_t p = 0; p < placed.values.size() / 3; ++p) placed.values[p * 3 + 2] += cfg.depth;
    s.pose2d = project_2d(placed, cfg.camera);
    if (cfg.jitter_2d > 0.0) {
      std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
      std::normal_distribution<double> normal(0.0, cfg.jitter_2d);
      for (auto& v : s.pose2d.values.data()) v += normal(rng);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(const std::vector<Sample>& samples, const DatasetConfig& cfg,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "hgfrenet-dataset";
  manifest["count"] = samples.size();
  manifest["frames"] = cfg.frames;
  manifest["fps"] = cfg.fps;
  manifest["seed"] = cfg.seed;
  manifest["depth"] = cfg.depth;
  manifest["jitter_2d"] = cfg.jitter_2d;
  manifest["camera"] = {{"focal_x", cfg.camera.focal_x}, {"focal_y", cfg.camera.focal_y},
                        {"center_x", cfg.camera.center_x}, {"center_y", cfg.camera.center_y},
                        {"width", cfg.camera.width},     {"height", cfg.camera.height}};
  manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << i;
    const std::string gt = stem.str() + ".gt3d.pseq";
    const std::string in = stem.str() + ".in2d.pseq";
    write_sequence(samples[i].pose3d, dir / gt);
    write_sequence(samples[i].pose2d, dir / in);
    manifest["samples"].push_back(
        {{"action", samples[i].action}, {"seed", samples[i].seed}, {"gt3d", gt}, {"in2d", in}});
  }
  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest in " + dir.string() + ": " + e.what());
  }
  std::vector<Sample> samples;
  try {
    for (const auto& entry : manifest.at("samples")) {
      Sample s;
      s.action = entry.value("action", std::string("unknown"));
      s.seed = entry.value("seed", std::uint64_t{0});
      s.pose3d = read_sequence(dir / entry.at("gt3d").get<std::string>());
      s.pose2d = read_sequence(dir / entry.at("in2d").get<std::string>());
      if (s.pose3d.channels() != 3 || s.pose2d.channels() != 2 ||
          s.pose3d.frames() != s.pose2d.frames() || s.pose3d.joints() != s.pose2d.joints()) {
        throw DataError("sample " + entry.at("gt3d").get<std::string>() + " has mismatched 2D/3D shapes");
      }
      samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest in " + dir.string() + ": " + e.what());
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(const std::vector<Sample>& samples) {
  std::size_t val = samples.size() / 5;
  if (val == 0 && samples.size() >= 2) val = 1;
  const auto cut = samples.end() - static_cast<std::ptrdiff_t>(val);
  return {std::vector<Sample>(samples.begin(), cut), std::vector<Sample>(cut, samples.end())};
}

}  // namespace hgf::data
