#pragma once

// Hybrid graph attention: per-frame aggregation over a hop-hybrid adjacency,
// cross-attention between joint and hybrid features, non-parametric joint
// similarity, and head fusion. Inputs are [..., N, C]; every leading axis
// (batch, frame) is processed independently except by batch norm.

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hgfrenet/autograd.hpp"
#include "hgfrenet/parameters.hpp"

namespace hgf::hga {

struct HgaParams {
  std::size_t channels = 0;
  std::size_t heads = 1;
  Var ln_gamma, ln_beta;        // [C]
  Var w_a, w_b;                 // [C, C]
  std::vector<Var> w_q, w_k, w_v;  // per subspace [C/h, C/h]
  Var w_upd;                    // [3C/h, C/h], shared by all subspaces
  Var w_merge;                  // [C, C]
  Var learnable_adj;            // [N, N]
  Var bn_gamma, bn_beta;        // [C]
  Var bn_running_mean, bn_running_var;  // buffers [C]
};

/// Default subspace count: 8 when C >= 64, else 2.
std::size_t default_heads(std::size_t channels);

/// Registers the parameters under `prefix` (e.g. "block0.hga1"). Weights
/// are Xavier-normal, the learnable adjacency starts at zero.
HgaParams make_params(ParameterSet& params, const std::string& prefix, std::size_t channels,
                      std::size_t heads, std::size_t joints, std::mt19937_64& rng);

/// (x_in W_a, x_in W_b).
std::pair<Var, Var> project_ab(const Var& x_in, const HgaParams& p);

/// Contiguous channel chunks; concatenating them restores x.
std::vector<Var> split_heads(const Var& x, std::size_t heads);

/// Per frame: adj_total * x_b_h over the joint axis.
Var aggregate_hybrid(const Var& x_b_h, const Var& adj_total);

/// softmax((x_a W_q)(x_hyb W_k)^T / sqrt(C/h)) (x_hyb W_v) over joints.
Var hybrid_cross_attention(const Var& x_a_h, const Var& x_hyb_h, const Var& w_q, const Var& w_k,
                           const Var& w_v);

/// softmax(x_a x_b^T) x_b with no projections and no scaling.
Var npsc(const Var& x_a_h, const Var& x_b_h);

/// concat(x_a, x_hyb', x_joint) W_upd.
Var fuse_update(const Var& x_a_h, const Var& x_hyb_h, const Var& x_joint_h, const Var& w_upd);

/// concat(parts) W_merge.
Var merge_heads(const std::vector<Var>& parts, const Var& w_merge);

/// LN -> project -> per subspace {aggregate -> cross attention; NPSC} ->
/// fuse -> merge -> batch norm -> GELU -> + LN'd input.
Var hga_forward(const Var& x, const HgaParams& p, const Var& skeletal_adj, bool training);

}  // namespace hgf::hga
