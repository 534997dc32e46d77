#include "hgfrenet/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "hgfrenet/error.hpp"
#include "hgfrenet/kernels.hpp"

namespace hgf::ops {

using kernels::Trans;

namespace {

thread_local AttentionObserver t_attention_observer;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank_at_least(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() < rank) {
    throw ShapeError(std::string(op) + ": expected rank >= " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src, double factor = 1.0) {
  double* d = dst.ptr();
  const double* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += factor * s[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return make_op(std::move(out), {a, b}, [a, b](Node& self) mutable {
    if (a.requires_grad()) add_into(a.grad_buffer(), self.grad);
    if (b.requires_grad()) add_into(b.grad_buffer(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  add_into(out, b.value(), -1.0);
  return make_op(std::move(out), {a, b}, [a, b](Node& self) mutable {
    if (a.requires_grad()) add_into(a.grad_buffer(), self.grad);
    if (b.requires_grad()) add_into(b.grad_buffer(), self.grad, -1.0);
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return make_op(std::move(out), {a}, [a, s](Node& self) mutable {
    add_into(a.grad_buffer(), self.grad, s);
  });
}

Var add_trailing(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw ShapeError("add_trailing: " + shape_str(bs) + " is not a trailing shape of " +
                     shape_str(as));
  }
  const std::size_t inner = b.value().size();
  const std::size_t outer = a.value().size() / inner;
  Tensor out = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.ptr() + o * inner;
    const double* src = b.value().ptr();
    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
  }
  return make_op(std::move(out), {a, b}, [a, b, inner, outer](Node& self) mutable {
    if (a.requires_grad()) add_into(a.grad_buffer(), self.grad);
    if (b.requires_grad()) {
      double* gb = b.grad_buffer().ptr();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = self.grad.ptr() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) gb[i] += g[i];
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  require_rank_at_least(x, 1, "linear");
  if (w.value().rank() != 2 || x.shape().back() != w.shape()[0]) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  const std::size_t rows = x.value().rows();
  const std::size_t d_in = w.shape()[0];
  const std::size_t d_out = w.shape()[1];
  if (bias.defined() && bias.shape() != Shape{d_out}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for weight " +
                     shape_str(w.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor y(out_shape);
  kernels::gemm(Trans::No, Trans::No, rows, d_out, d_in, x.value().ptr(), d_in, w.value().ptr(),
                d_out, y.ptr(), d_out, false);
  if (bias.defined()) {
    const double* bp = bias.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = y.ptr() + r * d_out;
      for (std::size_t j = 0; j < d_out; ++j) yr[j] += bp[j];
    }
  }
  std::vector<Var> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(y), inputs,
                 [x, w, bias, rows, d_in, d_out](Node& self) mutable {
                   const double* g = self.grad.ptr();
                   if (x.requires_grad()) {
                     kernels::gemm(Trans::No, Trans::Yes, rows, d_in, d_out, g, d_out,
                                   w.value().ptr(), d_out, x.grad_buffer().ptr(), d_in, true);
                   }
                   if (w.requires_grad()) {
                     kernels::gemm(Trans::Yes, Trans::No, d_in, d_out, rows, x.value().ptr(), d_in,
                                   g, d_out, w.grad_buffer().ptr(), d_out, true);
                   }
                   if (bias.defined() && bias.requires_grad()) {
                     double* gb = bias.grad_buffer().ptr();
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t j = 0; j < d_out; ++j) gb[j] += g[r * d_out + j];
                     }
                   }
                 });
}

Var softmax_rows(const Var& x) {
  require_rank_at_least(x, 1, "softmax_rows");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().rows();
  Tensor y(x.shape());
  kernels::softmax_rows(rows, n, x.value().ptr(), y.ptr());
  return make_op(std::move(y), {x}, [x, rows, n](Node& self) mutable {
    Tensor dx(self.value.shape());
    kernels::softmax_rows_backward(rows, n, self.value.ptr(), self.grad.ptr(), dx.ptr());
    add_into(x.grad_buffer(), dx);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank_at_least(x, 1, "layer_norm");
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ShapeError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.value().rows();
  Tensor xhat(x.shape());
  Tensor rstd(Shape{rows});
  kernels::layer_norm_rows(rows, n, x.value().ptr(), xhat.ptr(), rstd.ptr(), eps);
  Tensor y(x.shape());
  const double* g = gamma.value().ptr();
  const double* b = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xhat[r * n + j] * g[j] + b[j];
  }
  return make_op(std::move(y), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows,
                  n](Node& self) mutable {
                   const double* dy = self.grad.ptr();
                   const double* gv = gamma.value().ptr();
                   if (gamma.requires_grad() || beta.requires_grad()) {
                     double* dg = gamma.requires_grad() ? gamma.grad_buffer().ptr() : nullptr;
                     double* db = beta.requires_grad() ? beta.grad_buffer().ptr() : nullptr;
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t j = 0; j < n; ++j) {
                         if (dg) dg[j] += dy[r * n + j] * xhat[r * n + j];
                         if (db) db[j] += dy[r * n + j];
                       }
                     }
                   }
                   if (!x.requires_grad()) return;
                   double* dx = x.grad_buffer().ptr();
                   const double inv_n = 1.0 / static_cast<double>(n);
                   const bool parallel = rows * n >= 16384 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
                   for (std::size_t r = 0; r < rows; ++r) {
                     double mean_d = 0.0;
                     double mean_dx = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       const double d = dy[r * n + j] * gv[j];
                       mean_d += d;
                       mean_dx += d * xhat[r * n + j];
                     }
                     mean_d *= inv_n;
                     mean_dx *= inv_n;
                     for (std::size_t j = 0; j < n; ++j) {
                       const double d = dy[r * n + j] * gv[j];
                       dx[r * n + j] += rstd[r] * (d - mean_d - xhat[r * n + j] * mean_dx);
                     }
                   }
                 });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState state) {
  require_rank_at_least(x, 1, "batch_norm");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.value().rows();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c}) {
    throw ShapeError("batch_norm: per-channel tensors must have shape [" + std::to_string(c) + "]");
  }
  const double* xv = x.value().ptr();
  Tensor mean(Shape{c});
  Tensor rstd(Shape{c});
  if (state.training) {
    if (rows < 2) throw ShapeError("batch_norm: training mode needs at least two positions");
    Tensor var(Shape{c});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) mean[j] += xv[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xv[r * c + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(rows);
      const double unbiased = var[j] / static_cast<double>(rows - 1);
      rstd[j] = 1.0 / std::sqrt(biased + state.eps);
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = state.running_mean[j];
      rstd[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
    }
  }
  Tensor xhat(x.shape());
  Tensor y(x.shape());
  const double* g = gamma.value().ptr();
  const double* b = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xv[r * c + j] - mean[j]) * rstd[j];
      xhat[r * c + j] = h;
      y[r * c + j] = h * g[j] + b[j];
    }
  }
  const bool training = state.training;
  return make_op(
      std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows, c,
       training](Node& self) mutable {
        const double* dy = self.grad.ptr();
        const double* gv = gamma.value().ptr();
        Tensor sum_d(Shape{c});
        Tensor sum_dx(Shape{c});
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            sum_d[j] += dy[r * c + j];
            sum_dx[j] += dy[r * c + j] * xhat[r * c + j];
          }
        }
        if (gamma.requires_grad()) add_into(gamma.grad_buffer(), sum_dx);
        if (beta.requires_grad()) add_into(beta.grad_buffer(), sum_d);
        if (!x.requires_grad()) return;
        double* dx = x.grad_buffer().ptr();
        const double inv_rows = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            if (training) {
              dx[r * c + j] += gv[j] * rstd[j] *
                               (dy[r * c + j] - sum_d[j] * inv_rows -
                                xhat[r * c + j] * sum_dx[j] * inv_rows);
            } else {
              dx[r * c + j] += gv[j] * rstd[j] * dy[r * c + j];
            }
          }
        }
      });
}

Var gelu(const Var& x) {
  Tensor y(x.shape());
  kernels::gelu(y.size(), x.value().ptr(), y.ptr());
  return make_op(std::move(y), {x}, [x](Node& self) mutable {
    Tensor dx(x.shape());
    kernels::gelu_backward(dx.size(), x.value().ptr(), self.grad.ptr(), dx.ptr());
    add_into(x.grad_buffer(), dx);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, double scale,
              std::string_view tag) {
  require_rank_at_least(q, 2, "attention");
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (ks.size() != qs.size() || vs.size() != qs.size() ||
      !std::equal(qs.begin(), qs.end() - 2, ks.begin()) ||
      !std::equal(qs.begin(), qs.end() - 2, vs.begin()) || ks.back() != qs.back() ||
      ks[ks.size() - 2] != vs[vs.size() - 2]) {
    throw ShapeError("attention: incompatible q " + shape_str(qs) + ", k " + shape_str(ks) +
                     ", v " + shape_str(vs));
  }
  if (heads == 0 || qs.back() % heads != 0 || vs.back() % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide channels " +
                      std::to_string(qs.back()));
  }
  const std::size_t n = qs[qs.size() - 2];
  const std::size_t m = ks[ks.size() - 2];
  const std::size_t cq = qs.back();
  const std::size_t cv = vs.back();
  const std::size_t d = cq / heads;
  const std::size_t dv = cv / heads;
  if (d == 0) throw ShapeError("attention: zero head dimension");
  const std::size_t rows = q.value().size() / (n * cq);

  Shape out_shape = qs;
  out_shape.back() = cv;
  Tensor out(out_shape);
  Tensor probs(Shape{rows, heads, n, m});
  const double* qp = q.value().ptr();
  const double* kp = k.value().ptr();
  const double* vp = v.value().ptr();
  const std::size_t units = rows * heads;
  const bool parallel = units > 1 && units * n * m * d >= 16384 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t u = 0; u < units; ++u) {
    const std::size_t r = u / heads;
    const std::size_t h = u % heads;
    double* p = probs.ptr() + u * n * m;
    const double* qu = qp + r * n * cq + h * d;
    const double* ku = kp + r * m * cq + h * d;
    const double* vu = vp + r * m * cv + h * dv;
    double* ou = out.ptr() + r * n * cv + h * dv;
    // Head blocks are narrow (a few to a few dozen channels), so plain loops
    // beat packing them for gemm.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += qu[i * cq + c] * ku[j * cq + c];
        p[i * m + j] = acc * scale;
      }
    }
    kernels::softmax_rows(n, m, p, p);
    for (std::size_t i = 0; i < n; ++i) {
      double* __restrict o = ou + i * cv;
      for (std::size_t j = 0; j < m; ++j) {
        const double pij = p[i * m + j];
        const double* __restrict vj = vu + j * cv;
        for (std::size_t c = 0; c < dv; ++c) o[c] += pij * vj[c];
      }
    }
  }
  if (t_attention_observer) t_attention_observer(tag, probs);

  return make_op(
      std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), rows, heads, n, m, cq, cv, d, dv, scale,
       units](Node& self) mutable {
        const double* g = self.grad.ptr();
        const double* qp = q.value().ptr();
        const double* kp = k.value().ptr();
        const double* vp = v.value().ptr();
        double* dq = q.requires_grad() ? q.grad_buffer().ptr() : nullptr;
        double* dk = k.requires_grad() ? k.grad_buffer().ptr() : nullptr;
        double* dv_buf = v.requires_grad() ? v.grad_buffer().ptr() : nullptr;
        // q, k and v may share storage (self-attention), so a unit only writes
        // its own (row, head) block of each buffer.
        const bool parallel = units > 1 && units * n * m * d >= 16384 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
        for (std::size_t u = 0; u < units; ++u) {
          const std::size_t r = u / heads;
          const std::size_t h = u % heads;
          const double* p = probs.ptr() + u * n * m;
          const double* go = g + r * n * cv + h * dv;
          thread_local std::vector<double> dp;
          dp.assign(n * m, 0.0);
          const double* qu = qp + r * n * cq + h * d;
          const double* ku = kp + r * m * cq + h * d;
          const double* vu = vp + r * m * cv + h * dv;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < dv; ++c) acc += go[i * cv + c] * vu[j * cv + c];
              dp[i * m + j] = acc;
            }
          }
          if (dv_buf) {
            double* dvu = dv_buf + r * m * cv + h * dv;
            for (std::size_t i = 0; i < n; ++i) {
              const double* __restrict gi = go + i * cv;
              for (std::size_t j = 0; j < m; ++j) {
                const double pij = p[i * m + j];
                double* __restrict dj = dvu + j * cv;
                for (std::size_t c = 0; c < dv; ++c) dj[c] += pij * gi[c];
              }
            }
          }
          kernels::softmax_rows_backward(n, m, p, dp.data(), dp.data());
          for (auto& x : dp) x *= scale;
          if (dq) {
            double* dqu = dq + r * n * cq + h * d;
            for (std::size_t i = 0; i < n; ++i) {
              double* __restrict di = dqu + i * cq;
              for (std::size_t j = 0; j < m; ++j) {
                const double s = dp[i * m + j];
                const double* __restrict kj = ku + j * cq;
                for (std::size_t c = 0; c < d; ++c) di[c] += s * kj[c];
              }
            }
          }
          if (dk) {
            double* dku = dk + r * m * cq + h * d;
            for (std::size_t i = 0; i < n; ++i) {
              const double* __restrict qi = qu + i * cq;
              for (std::size_t j = 0; j < m; ++j) {
                const double s = dp[i * m + j];
                double* __restrict dj = dku + j * cq;
                for (std::size_t c = 0; c < d; ++c) dj[c] += s * qi[c];
              }
            }
          }
        }
      });
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v) {
  const std::size_t d = q.shape().back();
  if (d == 0) throw ShapeError("scaled_dot_attention: d = 0");
  return attention(q, k, v, 1, 1.0 / std::sqrt(static_cast<double>(d)), "scaled_dot");
}

Var joint_mix(const Var& adj, const Var& x) {
  require_rank_at_least(x, 2, "joint_mix");
  const std::size_t n = x.shape()[x.shape().size() - 2];
  const std::size_t c = x.shape().back();
  if (adj.shape() != Shape{n, n}) {
    throw ShapeError("joint_mix: adjacency " + shape_str(adj.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.value().size() / (n * c);
  Tensor out(x.shape());
  const bool parallel = rows > 1 && rows * n * n * c >= 65536 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::gemm(Trans::No, Trans::No, n, c, n, adj.value().ptr(), n,
                  x.value().ptr() + r * n * c, c, out.ptr() + r * n * c, c, false);
  }
  return make_op(std::move(out), {adj, x}, [adj, x, rows, n, c](Node& self) mutable {
    const double* g = self.grad.ptr();
    if (x.requires_grad()) {
      double* dx = x.grad_buffer().ptr();
      const bool parallel = rows > 1 && rows * n * n * c >= 65536 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
      for (std::size_t r = 0; r < rows; ++r) {
        kernels::gemm(Trans::Yes, Trans::No, n, c, n, adj.value().ptr(), n, g + r * n * c, c,
                      dx + r * n * c, c, true);
      }
    }
    if (adj.requires_grad()) {
      // dA = sum_r g_r x_r^T; the joint axis is small so fold rows into k.
      double* da = adj.grad_buffer().ptr();
      for (std::size_t r = 0; r < rows; ++r) {
        kernels::gemm(Trans::No, Trans::Yes, n, n, c, g + r * n * c, c,
                      x.value().ptr() + r * n * c, c, da, n, true);
      }
    }
  });
}

Var slice_last(const Var& x, std::size_t begin, std::size_t count) {
  require_rank_at_least(x, 1, "slice_last");
  const std::size_t c = x.shape().back();
  if (begin + count > c || count == 0) {
    throw ShapeError("slice_last: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + std::to_string(c));
  }
  const std::size_t rows = x.value().rows();
  Shape out_shape = x.shape();
  out_shape.back() = count;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.value().ptr() + r * c + begin, count, out.ptr() + r * count);
  }
  return make_op(std::move(out), {x}, [x, begin, count, rows, c](Node& self) mutable {
    double* dx = x.grad_buffer().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < count; ++j) dx[r * c + begin + j] += self.grad[r * count + j];
    }
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no parts");
  const Shape& first = parts.front().shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ShapeError("concat_last: inconsistent part shapes " + shape_str(first) + " and " +
                       shape_str(s));
    }
    total += s.back();
  }
  const std::size_t rows = parts.front().value().rows();
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.value().ptr() + r * w, w, out.ptr() + r * total + offset);
    }
    offset += w;
  }
  return make_op(std::move(out), parts, [parts, rows, total](Node& self) mutable {
    std::size_t offset = 0;
    for (auto& p : parts) {
      const std::size_t w = p.shape().back();
      if (p.requires_grad()) {
        double* dp = p.grad_buffer().ptr();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) dp[r * w + j] += self.grad[r * total + offset + j];
        }
      }
      offset += w;
    }
  });
}

Var swap_axes_12(const Var& x) {
  if (x.value().rank() != 4) throw ShapeError("swap_axes_12: expected rank 4, got " + shape_str(x.shape()));
  const std::size_t b = x.shape()[0];
  const std::size_t p = x.shape()[1];
  const std::size_t q = x.shape()[2];
  const std::size_t c = x.shape()[3];
  auto swap = [b, p, q, c](const double* src, double* dst, bool inverse) {
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (std::size_t pi = 0; pi < p; ++pi) {
        for (std::size_t qi = 0; qi < q; ++qi) {
          const std::size_t in_off = ((bi * p + pi) * q + qi) * c;
          const std::size_t out_off = ((bi * q + qi) * p + pi) * c;
          if (!inverse) {
            std::copy_n(src + in_off, c, dst + out_off);
          } else {
            double* d = dst + in_off;
            const double* s = src + out_off;
            for (std::size_t j = 0; j < c; ++j) d[j] += s[j];
          }
        }
      }
    }
  };
  Tensor out(Shape{b, q, p, c});
  swap(x.value().ptr(), out.ptr(), false);
  return make_op(std::move(out), {x}, [x, swap](Node& self) mutable {
    swap(self.grad.ptr(), x.grad_buffer().ptr(), true);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [x](Node& self) mutable {
    double* dx = x.grad_buffer().ptr();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Tensor mask(x.shape());
  const double inv = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = keep(rng) ? inv : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_op(std::move(out), {x}, [x, mask = std::move(mask)](Node& self) mutable {
    double* dx = x.grad_buffer().ptr();
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += self.grad[i] * mask[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_op(Tensor::scalar(s), {x}, [x](Node& self) mutable {
    const double g = self.grad[0];
    for (auto& v : x.grad_buffer().data()) v += g;
  });
}

AttentionObserverScope::AttentionObserverScope(AttentionObserver observer)
    : previous_(std::move(t_attention_observer)) {
  t_attention_observer = std::move(observer);
}

AttentionObserverScope::~AttentionObserverScope() { t_attention_observer = std::move(previous_); }

}  // namespace hgf::ops
