#include <algorithm>
#include <cmath>

#include "hgfrenet/kernels.hpp"

namespace hgf::kernels::reference {

namespace {

double elem(Trans t, const double* p, std::size_t ld, std::size_t r, std::size_t c) {
  return t == Trans::No ? p[r * ld + c] : p[c * ld + r];
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += elem(ta, a, lda, i, p) * elem(tb, b, ldb, p, j);
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t n, const double* in, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in + r * n;
    double* y = out + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
}

void softmax_rows_backward(std::size_t rows, std::size_t n, const double* p, const double* dp,
                           double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += p[r * n + j] * dp[r * n + j];
    for (std::size_t j = 0; j < n; ++j) dx[r * n + j] = p[r * n + j] * (dp[r * n + j] - dot);
  }
}

void layer_norm_rows(std::size_t rows, std::size_t n, const double* x, double* y, double* rstd,
                     double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[r * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[r * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = (x[r * n + j] - mean) * rstd[r];
  }
}

void gelu(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
}

void gelu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

}  // namespace hgf::kernels::reference
