#pragma once

// Synthetic motion, camera projection, noise injection and sequence files.
//
// 3D poses are root-relative camera coordinates in normalized units (one
// unit corresponds to 1000 mm when metrics are reported). 2D keypoints are
// pixel coordinates normalized by the image width to [-1, 1].

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hgfrenet/skeleton.hpp"
#include "hgfrenet/tensor.hpp"

namespace hgf::data {

/// T x N x C keypoints; C is 2 (image), 3 (camera space) or 5 (2D then 3D).
struct PoseSequence {
  Tensor values;
  double fps = 50.0;

  std::size_t frames() const { return values.dim(0); }
  std::size_t joints() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(2); }
};

/// Per-joint offset from the parent joint in the rest pose (root entry unused).
struct RestPose {
  std::vector<std::array<double, 3>> offsets;
};

RestPose h36m_rest_pose();

/// angle(t) = offset + amplitude * sin(2 pi frequency t + phase), radians.
struct Sinusoid {
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency_hz = 0.0;
  double phase = 0.0;
};

/// Local rotation angles about x, y, z for every joint. The root entry
/// rotates the whole body.
struct MotionSpec {
  std::string action = "custom";
  std::vector<std::array<Sinusoid, 3>> joint_angles;
};

enum class MotionFamily { Walk, Wave, Twist, Mixed };
std::string family_name(MotionFamily family);

MotionSpec random_motion_spec(const skeleton::SkeletonGraph& graph, MotionFamily family,
                              std::uint64_t seed);

/// Forward kinematics of the sinusoidal joint angles from the root. Bone
/// lengths are those of the rest pose in every frame.
PoseSequence generate_motion(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                             std::size_t frames, double fps, const MotionSpec& spec);

/// Seeded convenience form: random Mixed-family spec.
PoseSequence generate_motion(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                             std::size_t frames, double fps, std::uint64_t seed);

struct Camera {
  double focal_x = 1145.0;
  double focal_y = 1145.0;
  double center_x = 500.0;
  double center_y = 500.0;
  double width = 1000.0;
  double height = 1000.0;
};

/// Pinhole projection of camera-space joints, normalized by the image width.
PoseSequence project_2d(const PoseSequence& camera_space, const Camera& camera);

/// Analytic inverse of project_2d for a known depth per joint.
std::array<double, 3> unproject(const Camera& camera, double u, double v, double depth);

std::array<double, 2> normalized_principal_point(const Camera& camera);

struct NoiseConfig {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> stddevs;
};

/// Four groups for the 17-joint preset: {root, spine, thorax},
/// {hips, shoulders, neck, head}, {knees, elbows}, {ankles, wrists} with
/// standard deviations 0.002, 0.01, 0.1, 0.2.
NoiseConfig h36m_noise_config();

/// Checks that the groups partition [0, joints) and stds are non-negative.
void validate_noise(const NoiseConfig& cfg, std::size_t joints);

/// Adds i.i.d. zero-mean Gaussian noise to every coordinate using the std
/// of the joint's group. Works on [T, N, 3] or [B, T, N, 3].
Tensor inject_noise(const Tensor& poses, const NoiseConfig& cfg, std::mt19937_64& rng);
PoseSequence inject_noise(const PoseSequence& seq, const NoiseConfig& cfg, std::mt19937_64& rng);

/// Channels ordered (u, v, x, y, z).
PoseSequence concat_2d3d(const PoseSequence& seq2d, const PoseSequence& seq3d);
Tensor concat_2d3d(const Tensor& x2d, const Tensor& x3d);
std::pair<PoseSequence, PoseSequence> split_2d3d(const PoseSequence& seq5);

/// Subtracts the root joint from every joint of every frame.
Tensor root_relative(const Tensor& poses, std::size_t root);

// Sequence file: magic "PSEQ1", u32 T, N, C, f64 fps, then T*N*C f32 values
// (t outer, n middle, c inner). All little-endian.
void write_sequence(const PoseSequence& seq, const std::filesystem::path& path);
PoseSequence read_sequence(const std::filesystem::path& path);

/// One row per frame; columns j0_x, j0_y, ... (2D: x, y; 5 channels: u, v, x, y, z).
void write_csv(const PoseSequence& seq, const std::filesystem::path& path);

struct Sample {
  std::string action;
  std::uint64_t seed = 0;
  PoseSequence pose3d;  // root-relative camera space
  PoseSequence pose2d;  // normalized image coordinates
};

struct DatasetConfig {
  std::size_t count = 8;
  std::size_t frames = 27;
  double fps = 50.0;
  std::uint64_t seed = 0;
  double depth = 5.0;
  double jitter_2d = 0.0;  // std of Gaussian noise on normalized 2D inputs
  Camera camera;
};

/// Sequence i uses seed cfg.seed + i and cycles through the motion families.
std::vector<Sample> generate_dataset(const skeleton::SkeletonGraph& graph, const RestPose& rest,
                                     const DatasetConfig& cfg);

/// Writes manifest.json plus NNNN.gt3d.pseq / NNNN.in2d.pseq per sample.
void save_dataset(const std::vector<Sample>& samples, const DatasetConfig& cfg,
                  const std::filesystem::path& dir);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

/// The last 20% of samples (at least one when there are two or more) form
/// the validation split.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(const std::vector<Sample>& samples);

}  // namespace hgf::data
