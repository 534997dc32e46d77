#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "hgfrenet/autograd.hpp"

namespace hgf {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
};

/// Compares backward() gradients of f with central differences over every
/// coordinate of every leaf. f must rebuild its graph from the current leaf
/// values on each call; non-scalar outputs are reduced by summation.
/// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const std::function<Var()>& f, std::vector<Var> leaves,
                           double eps = 1e-5);

/// Convenience form: wraps inputs as leaves and checks op(leaves).
GradCheckReport grad_check(const std::function<Var(const std::vector<Var>&)>& op,
                           const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace hgf
