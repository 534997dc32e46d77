#include "hgfrenet/losses.hpp"

#include <cmath>
#include <string>

#include "hgfrenet/error.hpp"
#include "hgfrenet/ops.hpp"

namespace hgf::losses {

namespace {

struct PoseView {
  std::size_t batch, frames, joints;
};

PoseView pose_view(const Shape& s, const char* op) {
  if ((s.size() != 3 && s.size() != 4) || s.back() != 3) {
    throw ShapeError(std::string(op) + ": expected [T, N, 3] or [B, T, N, 3], got " + shape_str(s));
  }
  if (s.size() == 3) return {1, s[0], s[1]};
  return {s[0], s[1], s[2]};
}

PoseView pose_view(const Shape& yh, const Shape& y, const char* op) {
  if (yh != y) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(yh) + " vs target " + shape_str(y));
  }
  return pose_view(yh, op);
}

std::vector<double> weights_or_ones(const std::vector<double>& w, std::size_t joints) {
  if (w.empty()) return std::vector<double>(joints, 1.0);
  if (w.size() != joints) {
    throw ConfigError("joint weights have " + std::to_string(w.size()) + " entries for " +
                      std::to_string(joints) + " joints");
  }
  return w;
}

// Adds w * e / ||e|| to g for a 3-vector e; returns w * ||e||.
double norm_term(const double* e, double w, double* g) {
  const double norm = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
  if (norm > 0.0) {
    for (int c = 0; c < 3; ++c) g[c] += w * e[c] / norm;
  }
  return w * norm;
}

Var scalar_op(double value, const Var& y_hat, Tensor grad) {
  return make_op(Tensor::scalar(value), {y_hat}, [y_hat, grad = std::move(grad)](Node& self) {
    Tensor& dst = y_hat.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up * grad[i];
  });
}

}  // namespace

void validate(const LossWeights& w, std::size_t joints) {
  for (double l : {w.lambda_t, w.lambda_m, w.lambda_f}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and non-negative");
  }
  const auto wn = weights_or_ones(w.joint_weights, joints);
  bool any = false;
  for (double x : wn) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("joint weights must be finite and non-negative");
    any = any || x > 0.0;
  }
  if (!any) throw ConfigError("joint weights are all zero");
}

std::vector<double> grouped_joint_weights(const data::NoiseConfig& groups, std::size_t joints) {
  static constexpr double kGroupWeights[] = {1.0, 1.5, 2.5, 4.0};
  if (groups.groups.size() != 4) throw ConfigError("grouped joint weights need exactly four groups");
  data::validate_noise(groups, joints);
  std::vector<double> w(joints, 1.0);
  for (std::size_t g = 0; g < 4; ++g) {
    for (auto j : groups.groups[g]) w[j] = kGroupWeights[g];
  }
  return w;
}

Var wmpjpe(const Var& y_hat, const Tensor& y, const std::vector<double>& joint_weights) {
  const PoseView v = pose_view(y_hat.shape(), y.shape(), "wmpjpe");
  const auto wn = weights_or_ones(joint_weights, v.joints);
  const double scale = 1.0 / static_cast<double>(v.batch * v.frames * v.joints);
  const Tensor& yh = y_hat.value();
  Tensor g(yh.shape());
  double total = 0.0;
  for (std::size_t bt = 0; bt < v.batch * v.frames; ++bt) {
    for (std::size_t n = 0; n < v.joints; ++n) {
      const std::size_t o = (bt * v.joints + n) * 3;
      const double e[3] = {yh[o] - y[o], yh[o + 1] - y[o + 1], yh[o + 2] - y[o + 2]};
      total += norm_term(e, scale * wn[n], g.ptr() + o);
    }
  }
  return scalar_op(total, y_hat, std::move(g));
}

Var tc_loss(const Var& y_hat, const std::vector<double>& joint_weights) {
  const PoseView v = pose_view(y_hat.shape(), "tc_loss");
  if (v.frames < 2) throw ConfigError("tc_loss needs at least 2 frames");
  const auto wn = weights_or_ones(joint_weights, v.joints);
  const double scale = 1.0 / static_cast<double>(v.batch * (v.frames - 1) * v.joints);
  const Tensor& yh = y_hat.value();
  Tensor g(yh.shape());
  double total = 0.0;
  const std::size_t frame = v.joints * 3;
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t t = 1; t < v.frames; ++t) {
      for (std::size_t n = 0; n < v.joints; ++n) {
        const std::size_t o = (b * v.frames + t) * frame + n * 3;
        const std::size_t p = o - frame;
        const double e[3] = {yh[o] - yh[p], yh[o + 1] - yh[p + 1], yh[o + 2] - yh[p + 2]};
        double ge[3] = {0.0, 0.0, 0.0};
        total += norm_term(e, scale * wn[n], ge);
        for (int c = 0; c < 3; ++c) {
          g[o + c] += ge[c];
          g[p + c] -= ge[c];
        }
      }
    }
  }
  return scalar_op(total, y_hat, std::move(g));
}

Var mpjve_loss(const Var& y_hat, const Tensor& y) {
  const PoseView v = pose_view(y_hat.shape(), y.shape(), "mpjve_loss");
  if (v.frames < 2) throw ConfigError("mpjve_loss needs at least 2 frames");
  const double scale = 1.0 / static_cast<double>(v.batch * v.frames * v.joints);
  const Tensor& yh = y_hat.value();
  Tensor g(yh.shape());
  double total = 0.0;
  const std::size_t frame = v.joints * 3;
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t t = 1; t < v.frames; ++t) {
      for (std::size_t n = 0; n < v.joints; ++n) {
        const std::size_t o = (b * v.frames + t) * frame + n * 3;
        const std::size_t p = o - frame;
        double e[3];
        for (int c = 0; c < 3; ++c) e[c] = (yh[o + c] - yh[p + c]) - (y[o + c] - y[p + c]);
        double ge[3] = {0.0, 0.0, 0.0};
        total += norm_term(e, scale, ge);
        for (int c = 0; c < 3; ++c) {
          g[o + c] += ge[c];
          g[p + c] -= ge[c];
        }
      }
    }
  }
  return scalar_op(total, y_hat, std::move(g));
}

LossBreakdown total_loss(const Var& y_hat, const Tensor& y, const LossWeights& weights) {
  const PoseView v = pose_view(y_hat.shape(), y.shape(), "total_loss");
  validate(weights, v.joints);
  LossBreakdown out;
  const Var lw = wmpjpe(y_hat, y, weights.joint_weights);
  const Var lt = tc_loss(y_hat, weights.joint_weights);
  const Var lm = mpjve_loss(y_hat, y);
  freq::FreqLossConfig fcfg = weights.freq;
  fcfg.joint_weights = weights.joint_weights;
  const Var lf = freq::freq_loss(y_hat, y, fcfg);
  out.l_w = lw.value()[0];
  out.l_t = lt.value()[0];
  out.l_m = lm.value()[0];
  out.l_f = lf.value()[0];
  Var total = lw;
  if (weights.lambda_t != 0.0) total = ops::add(total, ops::scale(lt, weights.lambda_t));
  if (weights.lambda_m != 0.0) total = ops::add(total, ops::scale(lm, weights.lambda_m));
  if (weights.lambda_f != 0.0) total = ops::add(total, ops::scale(lf, weights.lambda_f));
  out.total = total;
  return out;
}

}  // namespace hgf::losses
