#include "hgfrenet/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "hgfrenet/data.hpp"
#include "hgfrenet/error.hpp"

namespace hgf::metrics {

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

void require_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.rank() < 2 || a.shape().back() != 3) {
    throw ShapeError(std::string(op) + ": expected [..., N, 3], got " + shape_str(a.shape()));
  }
}

double dist3(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Aligns one frame of pred onto target in place. Returns false when either
// point set has no spread (translation-only fallback).
bool align_frame(Eigen::Map<Points> pred, Eigen::Map<const Points> target, bool with_scale) {
  const Eigen::RowVector3d mu_x = target.colwise().mean();
  const Eigen::RowVector3d mu_y = pred.colwise().mean();
  Points x0 = target.rowwise() - mu_x;
  Points y0 = pred.rowwise() - mu_y;
  const double norm_x = x0.norm();
  const double norm_y = y0.norm();
  if (norm_x < 1e-12 || norm_y < 1e-12) {
    pred = y0.rowwise() + mu_x;
    return false;
  }
  x0 /= norm_x;
  y0 /= norm_y;
  const Eigen::Matrix3d h = x0.transpose() * y0;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d s = svd.singularValues();
  const Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d r = v * u.transpose();
  if (r.determinant() < 0.0) {
    v.col(2) *= -1.0;
    s(2) *= -1.0;
    r = v * u.transpose();
  }
  const double a = with_scale ? s.sum() * norm_x / norm_y : 1.0;
  // Rows are points: aligned = a * (pred - mu_y) R + mu_x.
  pred = ((a * norm_y) * (y0 * r)).rowwise() + mu_x;
  return true;
}

}  // namespace

double mpjpe(const Tensor& y_hat, const Tensor& y) {
  require_pair(y_hat, y, "mpjpe");
  const std::size_t points = y.size() / 3;
  double total = 0.0;
  for (std::size_t p = 0; p < points; ++p) total += dist3(y_hat.ptr() + 3 * p, y.ptr() + 3 * p);
  return total / static_cast<double>(points);
}

Tensor procrustes_align(const Tensor& y_hat, const Tensor& y, bool with_scale) {
  p_mpjpe_detailed(y_hat, y, with_scale);  // shape checks
  Tensor out = y_hat;
  const std::size_t n = y.dim(y.rank() - 2);
  const std::size_t frames = y.size() / (3 * n);
  for (std::size_t f = 0; f < frames; ++f) {
    align_frame(Eigen::Map<Points>(out.ptr() + f * n * 3, static_cast<Eigen::Index>(n), 3),
                Eigen::Map<const Points>(y.ptr() + f * n * 3, static_cast<Eigen::Index>(n), 3), with_scale);
  }
  return out;
}

ProcrustesResult p_mpjpe_detailed(const Tensor& y_hat, const Tensor& y, bool with_scale) {
  require_pair(y_hat, y, "p_mpjpe");
  const std::size_t n = y.dim(y.rank() - 2);
  const std::size_t frames = y.size() / (3 * n);
  ProcrustesResult result;
  std::vector<double> buf(n * 3);
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    std::copy(y_hat.ptr() + f * n * 3, y_hat.ptr() + (f + 1) * n * 3, buf.begin());
    const bool ok = align_frame(Eigen::Map<Points>(buf.data(), static_cast<Eigen::Index>(n), 3),
                                Eigen::Map<const Points>(y.ptr() + f * n * 3, static_cast<Eigen::Index>(n), 3),
                                with_scale);
    if (!ok) ++result.degenerate_frames;
    for (std::size_t j = 0; j < n; ++j) total += dist3(buf.data() + 3 * j, y.ptr() + (f * n + j) * 3);
  }
  result.error = total / static_cast<double>(frames * n);
  return result;
}

double p_mpjpe(const Tensor& y_hat, const Tensor& y, bool with_scale) {
  return p_mpjpe_detailed(y_hat, y, with_scale).error;
}

double mpjve(const Tensor& y_hat, const Tensor& y) {
  require_pair(y_hat, y, "mpjve");
  if (y.rank() != 3) throw ShapeError("mpjve expects [T, N, 3], got " + shape_str(y.shape()));
  const std::size_t frames = y.dim(0), n = y.dim(1);
  if (frames < 2) throw ConfigError("mpjve needs at least 2 frames");
  double total = 0.0;
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t o = (t * n + j) * 3, p = o - n * 3;
      double e[3];
      for (int c = 0; c < 3; ++c) e[c] = (y_hat[o + c] - y_hat[p + c]) - (y[o + c] - y[p + c]);
      total += std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    }
  }
  return total / static_cast<double>((frames - 1) * n);
}

PckAuc pck_auc(const Tensor& y_hat, const Tensor& y, double threshold, double auc_max, double auc_step) {
  require_pair(y_hat, y, "pck_auc");
  if (!(auc_step > 0.0)) throw ConfigError("pck_auc: step must be positive");
  const std::size_t points = y.size() / 3;
  std::vector<double> err(points);
  for (std::size_t p = 0; p < points; ++p) err[p] = dist3(y_hat.ptr() + 3 * p, y.ptr() + 3 * p);
  auto pct = [&](double thr) {
    std::size_t hit = 0;
    for (double e : err) hit += e <= thr ? 1 : 0;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(points);
  };
  PckAuc out;
  out.pck = pct(threshold);
  const auto steps = static_cast<std::size_t>(std::floor(auc_max / auc_step + 1e-9));
  double sum = 0.0;
  for (std::size_t i = 0; i <= steps; ++i) sum += pct(static_cast<double>(i) * auc_step);
  out.auc = sum / static_cast<double>(steps + 1);
  return out;
}

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions, const EvalOptions& options) {
  EvalReport report;
  struct Acc {
    double mpjpe = 0, pmpjpe = 0, mpjve = 0;
    std::size_t frames = 0, vel_frames = 0, sequences = 0;
  };
  Acc all;
  std::map<std::string, Acc> per;
  double pck_sum = 0.0, auc_sum = 0.0;
  for (const auto& p : predictions) {
    require_pair(p.y_hat, p.y, "evaluate");
    if (p.y.rank() != 3) throw ShapeError("evaluate expects [T, N, 3] predictions");
    Tensor yh = options.root_relative ? data::root_relative(p.y_hat, options.root) : p.y_hat;
    Tensor y = options.root_relative ? data::root_relative(p.y, options.root) : p.y;
    for (auto& v : yh.data()) v *= options.unit_to_mm;
    for (auto& v : y.data()) v *= options.unit_to_mm;
    const std::size_t frames = y.dim(0);
    const auto pm = p_mpjpe_detailed(yh, y, options.procrustes_scale);
    const double e1 = mpjpe(yh, y) * static_cast<double>(frames);
    const double e2 = pm.error * static_cast<double>(frames);
    report.degenerate_frames += pm.degenerate_frames;
    for (Acc* a : {&all, &per[p.action]}) {
      a->mpjpe += e1;
      a->pmpjpe += e2;
      a->frames += frames;
      a->sequences += 1;
      if (frames >= 2) {
        a->mpjve += mpjve(yh, y) * static_cast<double>(frames - 1);
        a->vel_frames += frames - 1;
      }
    }
    if (options.pck) {
      const auto pa = pck_auc(yh, y);
      pck_sum += pa.pck * static_cast<double>(frames);
      auc_sum += pa.auc * static_cast<double>(frames);
    }
  }
  auto finish = [](const Acc& a) {
    ActionMetrics m;
    if (a.frames) {
      m.mpjpe_mm = a.mpjpe / static_cast<double>(a.frames);
      m.p_mpjpe_mm = a.pmpjpe / static_cast<double>(a.frames);
    }
    if (a.vel_frames) m.mpjve_mm_per_frame = a.mpjve / static_cast<double>(a.vel_frames);
    m.sequences = a.sequences;
    return m;
  };
  const ActionMetrics total = finish(all);
  report.mpjpe_mm = total.mpjpe_mm;
  report.p_mpjpe_mm = total.p_mpjpe_mm;
  report.mpjve_mm_per_frame = total.mpjve_mm_per_frame;
  report.sequences = all.sequences;
  report.frames = all.frames;
  for (const auto& [action, acc] : per) report.per_action[action] = finish(acc);
  if (options.pck && all.frames) {
    report.pck_percent = pck_sum / static_cast<double>(all.frames);
    report.auc_percent = auc_sum / static_cast<double>(all.frames);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["mpjpe_mm"] = report.mpjpe_mm;
  j["p_mpjpe_mm"] = report.p_mpjpe_mm;
  j["mpjve_mm_per_frame"] = report.mpjve_mm_per_frame;
  j["sequences"] = report.sequences;
  j["frames"] = report.frames;
  j["degenerate_frames"] = report.degenerate_frames;
  if (report.pck_percent) j["pck_percent"] = *report.pck_percent;
  if (report.auc_percent) j["auc_percent"] = *report.auc_percent;
  j["per_action"] = nlohmann::json::object();
  for (const auto& [action, m] : report.per_action) {
    j["per_action"][action] = {{"mpjpe_mm", m.mpjpe_mm},
                               {"p_mpjpe_mm", m.p_mpjpe_mm},
                               {"mpjve_mm_per_frame", m.mpjve_mm_per_frame},
                               {"sequences", m.sequences}};
  }
  return j;
}

std::string per_action_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "action,sequences,mpjpe_mm,p_mpjpe_mm,mpjve_mm_per_frame\n";
  for (const auto& [action, m] : report.per_action) {
    out << action << ',' << m.sequences << ',' << m.mpjpe_mm << ',' << m.p_mpjpe_mm << ','
        << m.mpjve_mm_per_frame << '\n';
  }
  return out.str();
}

}  // namespace hgf::metrics
