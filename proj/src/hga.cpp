#include "hgfrenet/hga.hpp"

#include <cmath>

#include "hgfrenet/error.hpp"
#include "hgfrenet/init.hpp"
#include "hgfrenet/ops.hpp"

namespace hgf::hga {

std::size_t default_heads(std::size_t channels) { return channels >= 64 ? 8 : 2; }

HgaParams make_params(ParameterSet& params, const std::string& prefix, std::size_t channels,
                      std::size_t heads, std::size_t joints, std::mt19937_64& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("HGA: " + std::to_string(heads) + " subspaces do not divide " +
                      std::to_string(channels) + " channels");
  }
  const std::size_t d = channels / heads;
  HgaParams p;
  p.channels = channels;
  p.heads = heads;
  p.ln_gamma = params.add(prefix + ".ln.gamma", Tensor(Shape{channels}, 1.0));
  p.ln_beta = params.add(prefix + ".ln.beta", Tensor(Shape{channels}));
  p.w_a = params.add(prefix + ".Wa", init::xavier_normal(channels, channels, rng));
  p.w_b = params.add(prefix + ".Wb", init::xavier_normal(channels, channels, rng));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string s = prefix + ".sub" + std::to_string(h);
    p.w_q.push_back(params.add(s + ".Wq", init::xavier_normal(d, d, rng)));
    p.w_k.push_back(params.add(s + ".Wk", init::xavier_normal(d, d, rng)));
    p.w_v.push_back(params.add(s + ".Wv", init::xavier_normal(d, d, rng)));
  }
  p.w_upd = params.add(prefix + ".Wupd", init::xavier_normal(3 * d, d, rng));
  p.w_merge = params.add(prefix + ".Wmerge", init::xavier_normal(channels, channels, rng));
  p.learnable_adj = params.add(prefix + ".A_hyb", Tensor(Shape{joints, joints}));
  p.bn_gamma = params.add(prefix + ".bn.gamma", Tensor(Shape{channels}, 1.0));
  p.bn_beta = params.add(prefix + ".bn.beta", Tensor(Shape{channels}));
  p.bn_running_mean = params.add_buffer(prefix + ".bn.running_mean", Tensor(Shape{channels}));
  p.bn_running_var = params.add_buffer(prefix + ".bn.running_var", Tensor(Shape{channels}, 1.0));
  return p;
}

std::pair<Var, Var> project_ab(const Var& x_in, const HgaParams& p) {
  return {ops::linear(x_in, p.w_a), ops::linear(x_in, p.w_b)};
}

std::vector<Var> split_heads(const Var& x, std::size_t heads) {
  const std::size_t c = x.shape().back();
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("split_heads: " + std::to_string(heads) + " does not divide " +
                      std::to_string(c) + " channels");
  }
  if (heads == 1) return {x};
  const std::size_t d = c / heads;
  std::vector<Var> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) parts.push_back(ops::slice_last(x, h * d, d));
  return parts;
}

Var aggregate_hybrid(const Var& x_b_h, const Var& adj_total) { return ops::joint_mix(adj_total, x_b_h); }

Var hybrid_cross_attention(const Var& x_a_h, const Var& x_hyb_h, const Var& w_q, const Var& w_k,
                           const Var& w_v) {
  const Var q = ops::linear(x_a_h, w_q);
  const Var k = ops::linear(x_hyb_h, w_k);
  const Var v = ops::linear(x_hyb_h, w_v);
  const double d = static_cast<double>(x_a_h.shape().back());
  return ops::attention(q, k, v, 1, 1.0 / std::sqrt(d), "hga.cross");
}

Var npsc(const Var& x_a_h, const Var& x_b_h) {
  return ops::attention(x_a_h, x_b_h, x_b_h, 1, 1.0, "hga.npsc");
}

Var fuse_update(const Var& x_a_h, const Var& x_hyb_h, const Var& x_joint_h, const Var& w_upd) {
  if (x_a_h.shape() != x_hyb_h.shape() || x_a_h.shape() != x_joint_h.shape()) {
    throw ShapeError("fuse_update: inputs " + shape_str(x_a_h.shape()) + ", " +
                     shape_str(x_hyb_h.shape()) + ", " + shape_str(x_joint_h.shape()) + " differ");
  }
  return ops::linear(ops::concat_last({x_a_h, x_hyb_h, x_joint_h}), w_upd);
}

Var merge_heads(const std::vector<Var>& parts, const Var& w_merge) {
  if (parts.empty()) throw ShapeError("merge_heads: no parts");
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ShapeError("merge_heads: inconsistent part shapes " + shape_str(parts.front().shape()) +
                       " and " + shape_str(p.shape()));
    }
  }
  const Var merged = parts.size() == 1 ? parts.front() : ops::concat_last(parts);
  return ops::linear(merged, w_merge);
}

Var hga_forward(const Var& x, const HgaParams& p, const Var& skeletal_adj, bool training) {
  if (x.shape().back() != p.channels) {
    throw ShapeError("hga_forward: input " + shape_str(x.shape()) + " for " +
                     std::to_string(p.channels) + " channels");
  }
  const Var x_in = ops::layer_norm(x, p.ln_gamma, p.ln_beta);
  const auto [x_a, x_b] = project_ab(x_in, p);
  const Var adj_total = ops::add(p.learnable_adj, skeletal_adj);
  const auto a_parts = split_heads(x_a, p.heads);
  const auto b_parts = split_heads(x_b, p.heads);
  std::vector<Var> updated;
  updated.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Var x_hyb = aggregate_hybrid(b_parts[h], adj_total);
    const Var x_hyb_att = hybrid_cross_attention(a_parts[h], x_hyb, p.w_q[h], p.w_k[h], p.w_v[h]);
    const Var x_joint = npsc(a_parts[h], b_parts[h]);
    updated.push_back(fuse_update(a_parts[h], x_hyb_att, x_joint, p.w_upd));
  }
  const Var merged = merge_heads(updated, p.w_merge);
  Var running_mean = p.bn_running_mean;
  Var running_var = p.bn_running_var;
  const Var normed =
      ops::batch_norm(merged, p.bn_gamma, p.bn_beta,
                      {running_mean.mutable_value(), running_var.mutable_value(), training});
  return ops::add(ops::gelu(normed), x_in);
}

}  // namespace hgf::hga
