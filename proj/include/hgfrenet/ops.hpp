#pragma once

// Differentiable tensor operations. Shapes follow the convention that the
// last axis is the feature axis and all leading axes are treated as rows.

#include <cstddef>
#include <functional>
#include <random>
#include <string_view>
#include <vector>

#include "hgfrenet/autograd.hpp"

namespace hgf::ops {

constexpr double kNormEps = 1e-5;

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);

/// a + b where b's shape equals the trailing dims of a (broadcast over the rest).
Var add_trailing(const Var& a, const Var& b);

/// y[..., j] = sum_i x[..., i] * w[i, j] (+ bias[j]). bias may be undefined.
Var linear(const Var& x, const Var& w, const Var& bias = Var());

/// Softmax over the last axis.
Var softmax_rows(const Var& x);

/// Per-position normalization over the last axis, then gamma * x + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kNormEps);

struct BatchNormState {
  Tensor& running_mean;
  Tensor& running_var;
  bool training;
  double momentum = 0.1;
  double eps = kNormEps;
};

/// Per-channel normalization over every leading position (batch x frames x joints).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState state);

Var gelu(const Var& x);

/// Multi-head scaled dot-product attention. q: [..., n, H*d], k: [..., m, H*d],
/// v: [..., m, H*dv]; head h uses channel chunk h of each. Returns [..., n, H*dv].
/// tag names the call site for attention observers.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, double scale,
              std::string_view tag = "attention");

/// softmax(q k^T / sqrt(d)) v for a single head.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v);

/// out[..., i, c] = sum_j adj[i, j] * x[..., j, c].
Var joint_mix(const Var& adj, const Var& x);

/// Channels [begin, begin + count) of the last axis.
Var slice_last(const Var& x, std::size_t begin, std::size_t count);
Var concat_last(const std::vector<Var>& parts);

/// [B, P, Q, C] -> [B, Q, P, C].
Var swap_axes_12(const Var& x);

Var reshape(const Var& x, Shape shape);

/// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, double p, std::mt19937_64& rng);

Var sum(const Var& x);

/// Receives attention probabilities [rows, heads, n, m] for every attention
/// evaluated on this thread while installed.
using AttentionObserver = std::function<void(std::string_view tag, const Tensor& probs)>;

class AttentionObserverScope {
 public:
  explicit AttentionObserverScope(AttentionObserver observer);
  ~AttentionObserverScope();
  AttentionObserverScope(const AttentionObserverScope&) = delete;
  AttentionObserverScope& operator=(const AttentionObserverScope&) = delete;

 private:
  AttentionObserver previous_;
};

}  // namespace hgf::ops
