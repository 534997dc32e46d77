#include "hgfrenet/network.hpp"

#include <cmath>
#include <set>

#include "hgfrenet/error.hpp"
#include "hgfrenet/init.hpp"
#include "hgfrenet/ops.hpp"

namespace hgf::net {

namespace {

Var maybe_dropout(const Var& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (!ctx.rng) throw ConfigError("training forward with dropout needs a random source");
  return ops::dropout(x, p, *ctx.rng);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::size_t ModelConfig::effective_hga_heads() const {
  return hga_heads ? hga_heads : hga::default_heads(embed_dim);
}

losses::LossWeights ModelConfig::loss_weights() const {
  losses::LossWeights w;
  w.lambda_t = lambda_t;
  w.lambda_m = lambda_m;
  w.lambda_f = lambda_f;
  w.joint_weights = joint_weights;
  return w;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (frames == 0) fail("frames must be positive");
  if (joints < 2) fail("at least two joints are required");
  if (channels_in != 2 && channels_in != 5) fail("channels_in must be 2 or 5");
  if (embed_dim == 0) fail("embed_dim must be positive");
  if (depth == 0) fail("depth must be at least 1");
  if (temporal_encoders == 0) fail("temporal_encoders must be at least 1");
  if (ff_expansion == 0) fail("ff_expansion must be positive");
  for (auto [name, h] : {std::pair{"spatial_heads", spatial_heads}, std::pair{"temporal_heads", temporal_heads},
                         std::pair{"hga_heads", effective_hga_heads()}}) {
    if (h == 0 || embed_dim % h != 0) {
      fail(std::string(name) + "=" + std::to_string(h) + " does not divide embed_dim=" + std::to_string(embed_dim));
    }
  }
  if (hops < 1) fail("hops must be at least 1");
  if (hop_weights.size() != hops) fail("hop_weights must have one entry per hop");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!joint_weights.empty() && joint_weights.size() != joints) fail("joint_weights must have one entry per joint");
  losses::validate(loss_weights(), joints);
}

ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base) {
  static const std::set<std::string> known = {
      "frames", "joints", "channels_in", "embed_dim", "depth", "spatial_heads", "temporal_heads",
      "hga_heads", "temporal_encoders", "ff_expansion", "hops", "hop_weights", "row_normalize_adjacency",
      "dropout", "lambda_t", "lambda_m", "lambda_f", "joint_weights"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  try {
    read_field(j, "frames", base.frames);
    read_field(j, "joints", base.joints);
    read_field(j, "channels_in", base.channels_in);
    read_field(j, "embed_dim", base.embed_dim);
    read_field(j, "depth", base.depth);
    read_field(j, "spatial_heads", base.spatial_heads);
    read_field(j, "temporal_heads", base.temporal_heads);
    read_field(j, "hga_heads", base.hga_heads);
    read_field(j, "temporal_encoders", base.temporal_encoders);
    read_field(j, "ff_expansion", base.ff_expansion);
    read_field(j, "hops", base.hops);
    read_field(j, "hop_weights", base.hop_weights);
    read_field(j, "row_normalize_adjacency", base.row_normalize_adjacency);
    read_field(j, "dropout", base.dropout);
    read_field(j, "lambda_t", base.lambda_t);
    read_field(j, "lambda_m", base.lambda_m);
    read_field(j, "lambda_f", base.lambda_f);
    read_field(j, "joint_weights", base.joint_weights);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return base;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"frames", c.frames},
          {"joints", c.joints},
          {"channels_in", c.channels_in},
          {"embed_dim", c.embed_dim},
          {"depth", c.depth},
          {"spatial_heads", c.spatial_heads},
          {"temporal_heads", c.temporal_heads},
          {"hga_heads", c.hga_heads},
          {"temporal_encoders", c.temporal_encoders},
          {"ff_expansion", c.ff_expansion},
          {"hops", c.hops},
          {"hop_weights", c.hop_weights},
          {"row_normalize_adjacency", c.row_normalize_adjacency},
          {"dropout", c.dropout},
          {"lambda_t", c.lambda_t},
          {"lambda_m", c.lambda_m},
          {"lambda_f", c.lambda_f},
          {"joint_weights", c.joint_weights}};
}

void validate_pipeline(const ModelConfig& preliminary, const ModelConfig& main) {
  if (preliminary.channels_in != 2) throw ConfigError("preliminary model must take 2-channel input");
  if (main.channels_in != 5) throw ConfigError("main model must take 5-channel input");
  if (preliminary.frames != main.frames || preliminary.joints != main.joints) {
    throw ConfigError("preliminary and main models must share frames and joints");
  }
  if (preliminary.depth <= main.depth) {
    throw ConfigError("preliminary depth (" + std::to_string(preliminary.depth) +
                      ") must exceed the main model depth (" + std::to_string(main.depth) + ")");
  }
}

EncoderParams make_encoder(ParameterSet& params, const std::string& prefix, std::size_t channels,
                           std::size_t heads, std::size_t ff_expansion, std::mt19937_64& rng) {
  const std::size_t hidden = channels * ff_expansion;
  EncoderParams p;
  p.heads = heads;
  p.ln1_gamma = params.add(prefix + ".ln1.gamma", Tensor(Shape{channels}, 1.0));
  p.ln1_beta = params.add(prefix + ".ln1.beta", Tensor(Shape{channels}));
  p.w_q = params.add(prefix + ".Wq", init::xavier_normal(channels, channels, rng));
  p.b_q = params.add(prefix + ".bq", Tensor(Shape{channels}));
  p.w_k = params.add(prefix + ".Wk", init::xavier_normal(channels, channels, rng));
  p.b_k = params.add(prefix + ".bk", Tensor(Shape{channels}));
  p.w_v = params.add(prefix + ".Wv", init::xavier_normal(channels, channels, rng));
  p.b_v = params.add(prefix + ".bv", Tensor(Shape{channels}));
  p.w_o = params.add(prefix + ".Wo", init::xavier_normal(channels, channels, rng));
  p.b_o = params.add(prefix + ".bo", Tensor(Shape{channels}));
  p.ln2_gamma = params.add(prefix + ".ln2.gamma", Tensor(Shape{channels}, 1.0));
  p.ln2_beta = params.add(prefix + ".ln2.beta", Tensor(Shape{channels}));
  p.w_1 = params.add(prefix + ".W1", init::xavier_normal(channels, hidden, rng));
  p.b_1 = params.add(prefix + ".b1", Tensor(Shape{hidden}));
  p.w_2 = params.add(prefix + ".W2", init::xavier_normal(hidden, channels, rng));
  p.b_2 = params.add(prefix + ".b2", Tensor(Shape{channels}));
  return p;
}

Var encoder_forward(const Var& x, const EncoderParams& p, double dropout, const ForwardContext& ctx) {
  const std::size_t c = x.shape().back();
  const Var h = ops::layer_norm(x, p.ln1_gamma, p.ln1_beta);
  const Var q = ops::linear(h, p.w_q, p.b_q);
  const Var k = ops::linear(h, p.w_k, p.b_k);
  const Var v = ops::linear(h, p.w_v, p.b_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c / p.heads));
  const Var att = ops::linear(ops::attention(q, k, v, p.heads, scale), p.w_o, p.b_o);
  const Var x1 = ops::add(x, maybe_dropout(att, dropout, ctx));
  const Var h2 = ops::layer_norm(x1, p.ln2_gamma, p.ln2_beta);
  const Var ff = ops::linear(ops::gelu(ops::linear(h2, p.w_1, p.b_1)), p.w_2, p.b_2);
  return ops::add(x1, maybe_dropout(ff, dropout, ctx));
}

Var embed_input(const Var& x, const Var& w_emb) {
  if (x.shape().back() != w_emb.shape()[0]) {
    throw ShapeError("embed_input: input has " + std::to_string(x.shape().back()) +
                     " channels, embedding expects " + std::to_string(w_emb.shape()[0]));
  }
  return ops::linear(x, w_emb);
}

Var spatial_block_forward(const Var& x, const SpatialBlockParams& p, const Var& skeletal_adj, double dropout,
                          const ForwardContext& ctx) {
  Var h = hga::hga_forward(x, p.hga1, skeletal_adj, ctx.training);
  h = hga::hga_forward(h, p.hga2, skeletal_adj, ctx.training);
  return encoder_forward(h, p.ste, dropout, ctx);
}

Var temporal_block_forward(const Var& x, const TemporalBlockParams& p, const Var& pe_t, double dropout,
                           const ForwardContext& ctx) {
  Var h = ops::swap_axes_12(x);
  if (pe_t.defined()) h = ops::add_trailing(h, pe_t);
  for (const auto& tte : p.ttes) h = encoder_forward(h, tte, dropout, ctx);
  return ops::swap_axes_12(h);
}

Var regression_head(const Var& x, const Var& w, const Var& b) { return ops::linear(x, w, b); }

Model::Model(ModelConfig cfg, const skeleton::SkeletonGraph& graph, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (graph.joint_count != cfg_.joints) {
    throw ConfigError("skeleton has " + std::to_string(graph.joint_count) + " joints, model expects " +
                      std::to_string(cfg_.joints));
  }
  const auto adj = skeleton::make_hybrid_adjacency(graph, static_cast<int>(cfg_.hops), cfg_.hop_weights,
                                                   cfg_.row_normalize_adjacency);
  skeletal_adj_ = Var(adj.skeletal, false);

  std::mt19937_64 rng(seed);
  const std::size_t c = cfg_.embed_dim;
  w_emb_ = params_.add("embed.W", init::xavier_normal(cfg_.channels_in, c, rng));
  pe_s_ = params_.add("pe_s", init::normal(Shape{cfg_.joints, c}, 0.02, rng));
  pe_t_ = params_.add("pe_t", init::normal(Shape{cfg_.frames, c}, 0.02, rng));
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const std::string b = "block" + std::to_string(l);
    SpatialBlockParams sp;
    sp.hga1 = hga::make_params(params_, b + ".spatial.hga1", c, cfg_.effective_hga_heads(), cfg_.joints, rng);
    sp.hga2 = hga::make_params(params_, b + ".spatial.hga2", c, cfg_.effective_hga_heads(), cfg_.joints, rng);
    sp.ste = make_encoder(params_, b + ".spatial.ste", c, cfg_.spatial_heads, cfg_.ff_expansion, rng);
    spatial_.push_back(std::move(sp));
    TemporalBlockParams tp;
    for (std::size_t e = 0; e < cfg_.temporal_encoders; ++e) {
      tp.ttes.push_back(make_encoder(params_, b + ".temporal.tte" + std::to_string(e), c, cfg_.temporal_heads,
                                     cfg_.ff_expansion, rng));
    }
    temporal_.push_back(std::move(tp));
  }
  // Small output init: predictions start near the origin instead of metres away.
  head_w_ = params_.add("head.W", init::normal(Shape{c, 3}, 0.01, rng));
  head_b_ = params_.add("head.b", Tensor(Shape{3}));
}

Var Model::forward(const Var& x, const ForwardContext& ctx) const {
  const Shape& s = x.shape();
  const bool unbatched = s.size() == 3;
  if (s.size() != 3 && s.size() != 4) {
    throw ShapeError("model input must be [T, N, C] or [B, T, N, C], got " + shape_str(s));
  }
  const std::size_t t = s[s.size() - 3], n = s[s.size() - 2], cin = s.back();
  if (cin != cfg_.channels_in) {
    throw ShapeError("model expects " + std::to_string(cfg_.channels_in) + " input channels, got " +
                     std::to_string(cin));
  }
  if (t != cfg_.frames || n != cfg_.joints) {
    throw ShapeError("model built for T=" + std::to_string(cfg_.frames) + ", N=" + std::to_string(cfg_.joints) +
                     ", got input " + shape_str(s));
  }
  Var h = unbatched ? ops::reshape(x, Shape{1, t, n, cin}) : x;
  h = ops::add_trailing(embed_input(h, w_emb_), pe_s_);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    h = spatial_block_forward(h, spatial_[l], skeletal_adj_, cfg_.dropout, ctx);
    h = temporal_block_forward(h, temporal_[l], l == 0 ? pe_t_ : Var(), cfg_.dropout, ctx);
  }
  Var y = regression_head(h, head_w_, head_b_);
  return unbatched ? ops::reshape(y, Shape{t, n, 3}) : y;
}

Tensor Model::predict(const Tensor& x) const {
  NoGradGuard guard;
  return forward(Var(x), ForwardContext{}).value();
}

Var hgfrenet_forward(const Var& x5, const Model& model, const ForwardContext& ctx) {
  if (model.config().channels_in != 5) throw ConfigError("hgfrenet_forward needs a 5-channel model");
  return model.forward(x5, ctx);
}

Var preliminary_forward(const Var& x2d, const Model& model, const ForwardContext& ctx) {
  if (model.config().channels_in != 2) throw ConfigError("preliminary_forward needs a 2-channel model");
  return model.forward(x2d, ctx);
}

Var two_stage_forward(const Tensor& x2d, const Model& preliminary, const Model& main,
                      const data::NoiseConfig& noise, std::mt19937_64* noise_rng, const ForwardContext& ctx) {
  validate_pipeline(preliminary.config(), main.config());
  data::validate_noise(noise, main.config().joints);
  Tensor pre = preliminary.predict(x2d);
  if (noise_rng) pre = data::inject_noise(pre, noise, *noise_rng);
  return hgfrenet_forward(Var(data::concat_2d3d(x2d, pre)), main, ctx);
}

}  // namespace hgf::net
