#pragma once

// Evaluation metrics over [T, N, 3] pose sequences. The functions are unit
// agnostic; EvalReport values are in millimetres.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgfrenet/tensor.hpp"

namespace hgf::metrics {

/// Mean Euclidean joint error over all frames and joints.
double mpjpe(const Tensor& y_hat, const Tensor& y);

struct ProcrustesResult {
  double error = 0.0;                 // mean joint error after alignment
  std::size_t degenerate_frames = 0;  // frames aligned by translation only
};

/// Per frame, aligns y_hat to y with the least-squares similarity transform
/// (rotation, translation and, unless with_scale is false, uniform scale),
/// then averages joint errors. Reflections are excluded.
ProcrustesResult p_mpjpe_detailed(const Tensor& y_hat, const Tensor& y, bool with_scale = true);
double p_mpjpe(const Tensor& y_hat, const Tensor& y, bool with_scale = true);

/// y_hat aligned frame by frame onto y, as used by p_mpjpe.
Tensor procrustes_align(const Tensor& y_hat, const Tensor& y, bool with_scale = true);

/// Mean over joints and frames 1..T-1 of the velocity difference norm,
/// i.e. denominator (T - 1) N. Needs T >= 2.
double mpjve(const Tensor& y_hat, const Tensor& y);

struct PckAuc {
  double pck = 0.0;  // percent
  double auc = 0.0;  // percent
};

/// A joint counts as correct when its error is <= the threshold. AUC is the
/// mean PCK over thresholds 0, step, ..., auc_max.
PckAuc pck_auc(const Tensor& y_hat, const Tensor& y, double threshold = 150.0, double auc_max = 150.0,
               double auc_step = 5.0);

struct ActionMetrics {
  double mpjpe_mm = 0.0;
  double p_mpjpe_mm = 0.0;
  double mpjve_mm_per_frame = 0.0;
  std::size_t sequences = 0;
};

struct EvalReport {
  double mpjpe_mm = 0.0;
  double p_mpjpe_mm = 0.0;
  double mpjve_mm_per_frame = 0.0;
  std::map<std::string, ActionMetrics> per_action;
  std::optional<double> pck_percent;
  std::optional<double> auc_percent;
  std::size_t degenerate_frames = 0;
  std::size_t sequences = 0;
  std::size_t frames = 0;
};

struct Prediction {
  std::string action;
  Tensor y_hat;  // [T, N, 3]
  Tensor y;
};

struct EvalOptions {
  double unit_to_mm = 1000.0;  // inputs are normalized units (metres)
  bool root_relative = true;
  std::size_t root = 0;
  bool procrustes_scale = true;
  bool pck = false;
};

/// Frame-weighted averages over all predictions and per action. MPJVE is
/// skipped for single-frame predictions.
EvalReport evaluate_predictions(const std::vector<Prediction>& predictions, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
/// One row per action: action,sequences,mpjpe_mm,p_mpjpe_mm,mpjve_mm_per_frame.
std::string per_action_csv(const EvalReport& report);

}  // namespace hgf::metrics
