#include "hgfrenet/frequency.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "hgfrenet/error.hpp"
#include "hgfrenet/kernels.hpp"

namespace hgf::freq {

using kernels::Trans;

namespace {

struct PoseView {
  std::size_t batch, frames, joints;
};

PoseView pose_view(const Shape& yh, const Shape& y, const char* op) {
  if (yh != y) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(yh) + " vs target " + shape_str(y));
  }
  if ((yh.size() != 3 && yh.size() != 4) || yh.back() != 3) {
    throw ShapeError(std::string(op) + ": expected [T, N, 3] or [B, T, N, 3], got " + shape_str(yh));
  }
  if (yh.size() == 3) return {1, yh[0], yh[1]};
  return {yh[0], yh[1], yh[2]};
}

std::vector<double> joint_weights_or_ones(const std::vector<double>& w, std::size_t joints) {
  if (w.empty()) return std::vector<double>(joints, 1.0);
  if (w.size() != joints) {
    throw ConfigError("joint weights have " + std::to_string(w.size()) + " entries for " +
                      std::to_string(joints) + " joints");
  }
  return w;
}

// Coefficient differences D (y_hat - y) for every batch item: [B, T, N*3].
Tensor coefficient_error(const Tensor& y_hat, const Tensor& y, const PoseView& v, const DctBasis& basis) {
  const std::size_t cols = v.joints * 3;
  Tensor diff = y_hat;
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= y[i];
  Tensor coeffs(Shape{v.batch, v.frames, cols});
  for (std::size_t b = 0; b < v.batch; ++b) {
    kernels::gemm(Trans::No, Trans::No, v.frames, cols, v.frames, basis.matrix.ptr(), v.frames,
                  diff.ptr() + b * v.frames * cols, cols, coeffs.ptr() + b * v.frames * cols, cols,
                  false);
  }
  return coeffs;
}

// d(loss)/d(y_hat) = D^T g per batch item, scaled by the upstream gradient.
void backprop_coefficients(const Tensor& g, const PoseView& v, const DctBasis& basis, double upstream,
                           Tensor& dst) {
  const std::size_t cols = v.joints * 3;
  Tensor scaled = g;
  for (auto& x : scaled.data()) x *= upstream;
  for (std::size_t b = 0; b < v.batch; ++b) {
    kernels::gemm(Trans::Yes, Trans::No, v.frames, cols, v.frames, basis.matrix.ptr(), v.frames,
                  scaled.ptr() + b * v.frames * cols, cols, dst.ptr() + b * v.frames * cols, cols, true);
  }
}

}  // namespace

DctBasis dct_matrix(std::size_t frames) {
  if (frames == 0) throw ConfigError("dct_matrix: T must be at least 1");
  DctBasis basis;
  basis.size = frames;
  basis.matrix = Tensor(Shape{frames, frames});
  const double t_d = static_cast<double>(frames);
  for (std::size_t u = 0; u < frames; ++u) {
    const double s = u == 0 ? std::sqrt(1.0 / t_d) : std::sqrt(2.0 / t_d);
    for (std::size_t t = 0; t < frames; ++t) {
      basis.matrix[u * frames + t] =
          s * std::cos(std::numbers::pi * (2.0 * static_cast<double>(t) + 1.0) * static_cast<double>(u) /
                       (2.0 * t_d));
    }
  }
  return basis;
}

const DctBasis& dct_basis(std::size_t frames) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<DctBasis>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[frames];
  if (!slot) slot = std::make_unique<DctBasis>(dct_matrix(frames));
  return *slot;
}

namespace {

Tensor transform(const Tensor& x, const DctBasis& basis, Trans ta, const char* op) {
  if ((x.rank() != 1 && x.rank() != 2) || x.dim(0) != basis.size) {
    throw ShapeError(std::string(op) + ": input " + shape_str(x.shape()) + " for basis of size " +
                     std::to_string(basis.size));
  }
  const std::size_t cols = x.rank() == 1 ? 1 : x.dim(1);
  Tensor out(x.shape());
  kernels::gemm(ta, Trans::No, basis.size, cols, basis.size, basis.matrix.ptr(), basis.size, x.ptr(),
                cols, out.ptr(), cols, false);
  return out;
}

}  // namespace

Tensor dct_forward(const Tensor& traj, const DctBasis& basis) {
  return transform(traj, basis, Trans::No, "dct_forward");
}

Tensor dct_inverse(const Tensor& coeffs, const DctBasis& basis) {
  return transform(coeffs, basis, Trans::Yes, "dct_inverse");
}

Tensor lowpass(const Tensor& poses, std::size_t keep) {
  if (poses.rank() != 3) throw ShapeError("lowpass expects [T, N, C], got " + shape_str(poses.shape()));
  const std::size_t frames = poses.dim(0);
  if (keep == 0 || keep > frames) {
    throw ConfigError("lowpass: keep must be in [1, " + std::to_string(frames) + "]");
  }
  const auto& basis = dct_basis(frames);
  const Tensor flat = poses.reshaped(Shape{frames, poses.size() / frames});
  Tensor coeffs = dct_forward(flat, basis);
  for (std::size_t i = keep * flat.dim(1); i < coeffs.size(); ++i) coeffs[i] = 0.0;
  return dct_inverse(coeffs, basis).reshaped(poses.shape());
}

void validate(const FreqLossConfig& cfg, std::size_t frames) {
  if (cfg.truncation == Truncation::All) return;
  if (cfg.k == 0 || cfg.k > frames) {
    throw ConfigError("frequency truncation k=" + std::to_string(cfg.k) + " must be in [1, T=" +
                      std::to_string(frames) + "]");
  }
  if (cfg.truncation == Truncation::LowWeightedK && !(cfg.down_weight > 0.0 && cfg.down_weight <= 1.0)) {
    throw ConfigError("frequency down-weight must be in (0, 1]");
  }
}

std::vector<double> truncation_weights(const FreqLossConfig& cfg, std::size_t frames) {
  validate(cfg, frames);
  std::vector<double> w(frames, 1.0);
  if (cfg.truncation == Truncation::All) return w;
  const double tail = cfg.truncation == Truncation::TopK ? 0.0 : cfg.down_weight;
  for (std::size_t u = cfg.k; u < frames; ++u) w[u] = tail;
  return w;
}

Tensor apply_truncation(const Tensor& terms, const FreqLossConfig& cfg) {
  if (terms.rank() == 0) throw ShapeError("apply_truncation: empty term tensor");
  const std::size_t frames = terms.dim(0);
  const auto w = truncation_weights(cfg, frames);
  Tensor out = terms;
  const std::size_t stride = terms.size() / frames;
  for (std::size_t u = 0; u < frames; ++u) {
    for (std::size_t i = 0; i < stride; ++i) out[u * stride + i] *= w[u];
  }
  return out;
}

Var freq_loss(const Var& y_hat, const Tensor& y, const FreqLossConfig& cfg) {
  if (cfg.mode == Mode::SpatialAxis) return freq_loss_spatial_axis(y_hat, y, cfg.joint_weights, cfg);
  const PoseView v = pose_view(y_hat.shape(), y.shape(), "freq_loss");
  const auto wn = joint_weights_or_ones(cfg.joint_weights, v.joints);
  const auto wu = truncation_weights(cfg, v.frames);
  const DctBasis& basis = dct_basis(v.frames);
  const Tensor coeffs = coefficient_error(y_hat.value(), y, v, basis);

  const double scale = 1.0 / (static_cast<double>(v.frames * v.joints) * static_cast<double>(v.batch));
  Tensor g(coeffs.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t u = 0; u < v.frames; ++u) {
      for (std::size_t n = 0; n < v.joints; ++n) {
        const std::size_t o = (b * v.frames + u) * v.joints * 3 + n * 3;
        const double* e = coeffs.ptr() + o;
        const double norm = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
        const double w = scale * wu[u] * wn[n];
        total += w * norm;
        if (norm > 0.0) {
          for (int c = 0; c < 3; ++c) g[o + c] = w * e[c] / norm;
        }
      }
    }
  }
  return make_op(Tensor::scalar(total), {y_hat}, [y_hat, g = std::move(g), v, &basis](Node& self) {
    backprop_coefficients(g, v, basis, self.grad[0], y_hat.grad_buffer());
  });
}

Var freq_loss_spatial_axis(const Var& y_hat, const Tensor& y, const std::vector<double>& joint_weights,
                           const FreqLossConfig& cfg) {
  const PoseView v = pose_view(y_hat.shape(), y.shape(), "freq_loss_spatial_axis");
  const auto wn = joint_weights_or_ones(joint_weights, v.joints);
  const auto wu = truncation_weights(cfg, v.frames);
  const DctBasis& basis = dct_basis(v.frames);
  Tensor coeffs = coefficient_error(y_hat.value(), y, v, basis);
  const std::size_t cols = v.joints * 3;
  // Truncation scales the coefficient differences inside each spectrum norm.
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t u = 0; u < v.frames; ++u) {
      for (std::size_t i = 0; i < cols; ++i) coeffs[(b * v.frames + u) * cols + i] *= wu[u];
    }
  }

  const double scale = 1.0 / (3.0 * static_cast<double>(v.joints) * static_cast<double>(v.batch));
  Tensor g(coeffs.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t i = 0; i < cols; ++i) {
      double sq = 0.0;
      for (std::size_t u = 0; u < v.frames; ++u) {
        const double e = coeffs[(b * v.frames + u) * cols + i];
        sq += e * e;
      }
      const double norm = std::sqrt(sq);
      const double w = scale * wn[i / 3];
      total += w * norm;
      if (norm > 0.0) {
        for (std::size_t u = 0; u < v.frames; ++u) {
          const std::size_t o = (b * v.frames + u) * cols + i;
          g[o] = w * wu[u] * coeffs[o] / norm;
        }
      }
    }
  }
  return make_op(Tensor::scalar(total), {y_hat}, [y_hat, g = std::move(g), v, &basis](Node& self) {
    backprop_coefficients(g, v, basis, self.grad[0], y_hat.grad_buffer());
  });
}

}  // namespace hgf::freq
