#pragma once

// Model assembly: joint embedding, positional embeddings, alternating
// spatial (HGA, HGA, STE) and temporal (3 x TTE) blocks, and the regression
// head. Activations are [B, T, N, C]; unbatched [T, N, C] inputs are
// accepted by Model::forward and returned unbatched.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgfrenet/autograd.hpp"
#include "hgfrenet/data.hpp"
#include "hgfrenet/hga.hpp"
#include "hgfrenet/losses.hpp"
#include "hgfrenet/parameters.hpp"
#include "hgfrenet/skeleton.hpp"

namespace hgf::net {

struct ModelConfig {
  std::size_t frames = 27;
  std::size_t joints = 17;
  std::size_t channels_in = 5;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t spatial_heads = 8;
  std::size_t temporal_heads = 8;
  std::size_t hga_heads = 0;  // 0 picks hga::default_heads(embed_dim)
  std::size_t temporal_encoders = 3;
  std::size_t ff_expansion = 2;
  std::size_t hops = 2;
  std::vector<double> hop_weights{1.0, 1.0};
  bool row_normalize_adjacency = false;
  double dropout = 0.25;
  double lambda_t = 0.1;
  double lambda_m = 1.0;
  double lambda_f = 0.1;
  std::vector<double> joint_weights;  // empty means all ones

  std::size_t effective_hga_heads() const;
  losses::LossWeights loss_weights() const;
  void validate() const;
};

/// Unknown keys are rejected so that typos surface as configuration errors.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::json config_to_json(const ModelConfig& cfg);

/// The preliminary model must be 2-channel, the main model 5-channel, both
/// over the same T and N, and the preliminary model deeper (L' > L).
void validate_pipeline(const ModelConfig& preliminary, const ModelConfig& main);

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout source; required when training with dropout > 0
};

struct EncoderParams {
  std::size_t heads = 1;
  Var ln1_gamma, ln1_beta;
  Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Var ln2_gamma, ln2_beta;
  Var w_1, b_1, w_2, b_2;
};

struct SpatialBlockParams {
  hga::HgaParams hga1, hga2;
  EncoderParams ste;
};

struct TemporalBlockParams {
  std::vector<EncoderParams> ttes;
};

EncoderParams make_encoder(ParameterSet& params, const std::string& prefix, std::size_t channels,
                           std::size_t heads, std::size_t ff_expansion, std::mt19937_64& rng);

/// Pre-LN transformer encoder attending over the second-to-last axis.
Var encoder_forward(const Var& x, const EncoderParams& p, double dropout, const ForwardContext& ctx);

/// x [B, T, N, cin] -> [B, T, N, C] via a bias-free per-joint projection.
Var embed_input(const Var& x, const Var& w_emb);

/// HGA -> HGA -> STE over joints, per frame.
Var spatial_block_forward(const Var& x, const SpatialBlockParams& p, const Var& skeletal_adj, double dropout,
                          const ForwardContext& ctx);

/// [B, T, N, C] -> [B, N, T, C] -> TTEs over frames -> back. pe_t, when
/// defined, is added after the rearrangement (first block only).
Var temporal_block_forward(const Var& x, const TemporalBlockParams& p, const Var& pe_t, double dropout,
                           const ForwardContext& ctx);

/// Per-joint linear map C -> 3.
Var regression_head(const Var& x, const Var& w, const Var& b);

class Model {
 public:
  Model(ModelConfig cfg, const skeleton::SkeletonGraph& graph, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.trainable_count(); }
  const Var& skeletal_adjacency() const noexcept { return skeletal_adj_; }

  /// embed -> L x (spatial, temporal) -> head. x is [T, N, cin] or [B, T, N, cin].
  Var forward(const Var& x, const ForwardContext& ctx = {}) const;

  /// Inference without graph recording, eval mode.
  Tensor predict(const Tensor& x) const;

  // Individual pieces, exposed for tests and tooling.
  const Var& embedding() const noexcept { return w_emb_; }
  const Var& spatial_pe() const noexcept { return pe_s_; }
  const Var& temporal_pe() const noexcept { return pe_t_; }
  const std::vector<SpatialBlockParams>& spatial_blocks() const noexcept { return spatial_; }
  const std::vector<TemporalBlockParams>& temporal_blocks() const noexcept { return temporal_; }
  const Var& head_weight() const noexcept { return head_w_; }
  const Var& head_bias() const noexcept { return head_b_; }

 private:
  ModelConfig cfg_;
  ParameterSet params_;
  Var skeletal_adj_;
  Var w_emb_, pe_s_, pe_t_;
  std::vector<SpatialBlockParams> spatial_;
  std::vector<TemporalBlockParams> temporal_;
  Var head_w_, head_b_;
};

/// Main model on a 5-channel input.
Var hgfrenet_forward(const Var& x5, const Model& model, const ForwardContext& ctx = {});

/// Preliminary model on a 2-channel input.
Var preliminary_forward(const Var& x2d, const Model& model, const ForwardContext& ctx = {});

/// Preliminary prediction (no gradient) -> optional group-wise noise ->
/// concat (u, v, x, y, z) -> main model. noise_rng == nullptr skips the noise.
Var two_stage_forward(const Tensor& x2d, const Model& preliminary, const Model& main,
                      const data::NoiseConfig& noise, std::mt19937_64* noise_rng,
                      const ForwardContext& ctx = {});

}  // namespace hgf::net
