#pragma once

// Training losses over [T, N, 3] or [B, T, N, 3] poses. Batched inputs are
// averaged over B. Norms use subgradient 0 where a difference is exactly 0.

#include <cstddef>
#include <vector>

#include "hgfrenet/autograd.hpp"
#include "hgfrenet/data.hpp"
#include "hgfrenet/frequency.hpp"

namespace hgf::losses {

struct LossWeights {
  double lambda_t = 0.1;
  double lambda_m = 1.0;
  double lambda_f = 0.1;
  std::vector<double> joint_weights;  // W_n; empty means all ones
  freq::FreqLossConfig freq;          // its joint_weights are ignored in favour of the above
};

void validate(const LossWeights& w, std::size_t joints);

/// Non-paper preset: weights {1.0, 1.5, 2.5, 4.0} per noise group
/// (torso, limb starts + head, limb middles, limb ends).
std::vector<double> grouped_joint_weights(const data::NoiseConfig& groups, std::size_t joints);

/// (1 / (T N)) sum_n W_n sum_t ||yhat_tn - y_tn||.
Var wmpjpe(const Var& y_hat, const Tensor& y, const std::vector<double>& joint_weights = {});

/// (1 / ((T-1) N)) sum_n W_n sum_{t>=1} ||yhat_tn - yhat_{t-1,n}||. Needs T >= 2.
Var tc_loss(const Var& y_hat, const std::vector<double>& joint_weights = {});

/// (1 / (T N)) sum_n sum_{t>=1} ||(yhat_t - yhat_{t-1}) - (y_t - y_{t-1})||.
/// The T N denominator (rather than (T-1) N) is intentional.
Var mpjve_loss(const Var& y_hat, const Tensor& y);

struct LossBreakdown {
  Var total;
  double l_w = 0.0, l_t = 0.0, l_m = 0.0, l_f = 0.0;
};

/// L_w + lambda_t L_t + lambda_m L_m + lambda_f L_f. Terms whose lambda is 0
/// are still reported but not added to the graph.
LossBreakdown total_loss(const Var& y_hat, const Tensor& y, const LossWeights& weights);

}  // namespace hgf::losses
