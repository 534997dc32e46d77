#pragma once

// Orthonormal DCT-II along the time axis and the frequency-domain losses.
// Pose tensors are [T, N, 3] or [B, T, N, 3]; batched losses are averaged
// over B.

#include <cstddef>
#include <vector>

#include "hgfrenet/autograd.hpp"

namespace hgf::freq {

/// Row u holds basis vector u: D[u, t] = s_u cos(pi (2t + 1) u / (2T)) with
/// s_0 = sqrt(1/T), s_u = sqrt(2/T) otherwise (zero-based t, u).
struct DctBasis {
  std::size_t size = 0;
  Tensor matrix;  // [T, T]
};

DctBasis dct_matrix(std::size_t frames);

/// Shared, lazily built basis for T; safe to call from several threads.
const DctBasis& dct_basis(std::size_t frames);

/// coeffs = D traj. traj is [T] or [T, K] (K independent trajectories).
Tensor dct_forward(const Tensor& traj, const DctBasis& basis);
/// traj = D^T coeffs.
Tensor dct_inverse(const Tensor& coeffs, const DctBasis& basis);

/// Reconstruction from the `keep` lowest frequencies of every trajectory in
/// a [T, N, C] tensor.
Tensor lowpass(const Tensor& poses, std::size_t keep);

enum class Mode { Vector, SpatialAxis };
enum class Truncation { All, TopK, LowWeightedK };

struct FreqLossConfig {
  Mode mode = Mode::Vector;
  Truncation truncation = Truncation::All;
  std::size_t k = 0;
  double down_weight = 0.5;            // multiplies terms with u >= k for LowWeightedK
  std::vector<double> joint_weights;   // W_n; empty means all ones
};

/// Checks k and the down-weight for a sequence of `frames` frames.
void validate(const FreqLossConfig& cfg, std::size_t frames);

/// Per-frequency multipliers (length T) implied by the truncation setting.
std::vector<double> truncation_weights(const FreqLossConfig& cfg, std::size_t frames);

/// Scales each row u of `terms` ([T, ...], frequency-major) by its
/// truncation weight.
Tensor apply_truncation(const Tensor& terms, const FreqLossConfig& cfg);

/// (1 / (T N)) sum_u sum_n W_n || Fhat_n^u - F_n^u ||_2 over per-frequency
/// 3-vectors. Dispatches to the spatial-axis form when cfg.mode says so.
Var freq_loss(const Var& y_hat, const Tensor& y, const FreqLossConfig& cfg = {});

/// (1 / (3 N)) sum_c sum_n W_n || Fhat_{n,c} - F_{n,c} ||_2 over whole
/// per-axis spectra.
Var freq_loss_spatial_axis(const Var& y_hat, const Tensor& y, const std::vector<double>& joint_weights,
                           const FreqLossConfig& cfg = {});

}  // namespace hgf::freq
