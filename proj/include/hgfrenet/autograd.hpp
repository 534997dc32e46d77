#pragma once

// Minimal reverse-mode differentiation over Tensor values.
//
// Every differentiable operation produces a Var whose node remembers its
// inputs and a backward function. backward() walks the recorded graph in
// reverse topological order and accumulates gradients into each node that
// requires one. Parameters are long-lived leaf Vars; intermediate nodes die
// with the last Var referring to them.

#include <functional>
#include <memory>
#include <vector>

#include "hgfrenet/tensor.hpp"

namespace hgf {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node& self)> backward_fn;
  bool requires_grad = false;

  /// Gradient storage, zero-filled on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated by backward(); empty if nothing flowed here.
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_buffer() const { return node_->grad_buffer(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  friend Var make_op(Tensor, const std::vector<Var>&, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps an op result. The backward function is kept only when recording is
/// on and at least one input requires a gradient.
Var make_op(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

/// Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
void backward(const Var& root);

}  // namespace hgf
