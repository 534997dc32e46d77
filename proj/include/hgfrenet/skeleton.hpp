#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hgfrenet/tensor.hpp"

namespace hgf::skeleton {

using JointPair = std::pair<std::size_t, std::size_t>;

/// Kinematic tree over N joints plus left/right limb correspondences.
struct SkeletonGraph {
  std::size_t joint_count = 0;
  std::vector<JointPair> edges;
  std::vector<JointPair> symmetric_pairs;
  std::vector<std::string> joint_names;
  std::size_t root = 0;
};

/// Throws StructuralError unless indices are in range, there are no
/// self-loops or duplicates, the edges form a connected tree and the
/// symmetric pairs are disjoint from the edges.
void validate(const SkeletonGraph& graph);

/// The 17-joint Human3.6M layout: pelvis root, right leg, left leg,
/// spine/thorax/neck/head, left arm, right arm.
SkeletonGraph h36m_skeleton();

/// {"joints": [names], "edges": [[i,j],...], "symmetric_pairs": [[i,j],...], "root": i}
SkeletonGraph load_skeleton(const std::filesystem::path& path);
SkeletonGraph skeleton_from_json_text(const std::string& text);
std::string skeleton_to_json_text(const SkeletonGraph& graph);

/// Shortest-path hop distances. entry(i, j) = d(v_i, v_j).
class HopMatrix {
 public:
  HopMatrix(std::size_t n, std::vector<int> values) : n_(n), values_(std::move(values)) {}
  std::size_t size() const noexcept { return n_; }
  int operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  int diameter() const;

 private:
  std::size_t n_;
  std::vector<int> values_;
};

/// BFS over the edge set only; symmetric pairs do not shorten paths.
/// Throws StructuralError naming the unreachable joints when disconnected.
HopMatrix shortest_path_hops(const SkeletonGraph& graph);

/// Binary [N, N] matrix with ones exactly where the hop distance equals k.
Tensor khop_adjacency(const HopMatrix& hops, int k);

/// Binary [N, N] matrix with ones at the symmetric pairs (both orientations).
Tensor symmetric_matrix(const SkeletonGraph& graph);

/// Fixed part of the hybrid adjacency: sym_weight * A_sym + sum_k w_k * A^k.
struct HybridAdjacency {
  Tensor skeletal;
  std::vector<double> hop_weights;
  double sym_weight = 0.0;
};

/// Builds alpha_0 * A_sym + sum_{k=1..K} alpha_k * A^k with alpha_0 = alpha_K / 2.
/// hop_weights.size() must equal K and each weight lie in (0, 1].
Tensor hybrid_skeleton_matrix(const SkeletonGraph& graph, int hops,
                              const std::vector<double>& hop_weights);

/// As above, optionally dividing every row by its sum.
HybridAdjacency make_hybrid_adjacency(const SkeletonGraph& graph, int hops,
                                      const std::vector<double>& hop_weights,
                                      bool row_normalize = false);

/// Relabels joints: joint i of the input becomes joint perm[i].
SkeletonGraph permute_joints(const SkeletonGraph& graph, const std::vector<std::size_t>& perm);

}  // namespace hgf::skeleton
