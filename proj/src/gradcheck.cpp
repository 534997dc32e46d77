#include "hgfrenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hgfrenet/error.hpp"
#include "hgfrenet/ops.hpp"

namespace hgf {

namespace {

Var reduce(Var y) { return y.value().size() == 1 ? y : ops::sum(y); }

double evaluate(const std::function<Var()>& f, std::size_t leaf, std::size_t index) {
  NoGradGuard guard;
  const double v = reduce(f()).value()[0];
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite output while perturbing leaf " +
                       std::to_string(leaf) + " coordinate " + std::to_string(index));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& f, std::vector<Var> leaves, double eps) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Var y = reduce(f());
  if (!std::isfinite(y.value()[0])) throw NumericError("grad_check: non-finite output at base point");
  backward(y);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    analytic.push_back(leaf.grad().empty() ? Tensor(leaf.shape()) : leaf.grad());
  }

  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor& value = leaves[l].mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = value[i];
      value[i] = original + eps;
      const double plus = evaluate(f, l, i);
      value[i] = original - eps;
      const double minus = evaluate(f, l, i);
      value[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[l][i];
      if (!std::isfinite(a)) {
        throw NumericError("grad_check: non-finite analytic gradient at leaf " +
                           std::to_string(l) + " coordinate " + std::to_string(i));
      }
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (err > report.max_rel_error) report = {err, l, i};
    }
  }
  return report;
}

GradCheckReport grad_check(const std::function<Var(const std::vector<Var>&)>& op,
                           const std::vector<Tensor>& inputs, double eps) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  return grad_check([&] { return op(leaves); }, leaves, eps);
}

}  // namespace hgf
