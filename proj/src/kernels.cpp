#include "hgfrenet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace hgf::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

constexpr std::size_t kTileCols = 16;

// Eight doubles; GCC lowers this to whatever vector width the target has.
// v8du is the unaligned-access alias used for loads and stores.
typedef double v8d __attribute__((vector_size(64)));
typedef double v8du __attribute__((vector_size(64), aligned(8), may_alias));

inline v8d load8(const double* p) { return *reinterpret_cast<const v8du*>(p); }

inline void store8(double* p, v8d v) { *reinterpret_cast<v8du*>(p) = v; }

// Full MR x 16 tile: C (+)= A[0:MR, 0:k] * B[0:k, 0:16], accumulators in registers.
template <std::size_t MR>
inline void tile_full(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
  v8d lo[MR], hi[MR];
  for (std::size_t r = 0; r < MR; ++r) lo[r] = hi[r] = v8d{};
  for (std::size_t p = 0; p < k; ++p) {
    const v8d b0 = load8(b + p * ldb);
    const v8d b1 = load8(b + p * ldb + 8);
    for (std::size_t r = 0; r < MR; ++r) {
      const double ar = a[r * lda + p];
      lo[r] += ar * b0;
      hi[r] += ar * b1;
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    if (accumulate) {
      store8(cr, load8(cr) + lo[r]);
      store8(cr + 8, load8(cr + 8) + hi[r]);
    } else {
      store8(cr, lo[r]);
      store8(cr + 8, hi[r]);
    }
  }
}

// MR x 8 tile, same scheme as tile_full.
template <std::size_t MR>
inline void tile_half(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
  v8d acc[MR];
  for (std::size_t r = 0; r < MR; ++r) acc[r] = v8d{};
  for (std::size_t p = 0; p < k; ++p) {
    const v8d bv = load8(b + p * ldb);
    for (std::size_t r = 0; r < MR; ++r) acc[r] += a[r * lda + p] * bv;
  }
  for (std::size_t r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    store8(cr, accumulate ? load8(cr) + acc[r] : acc[r]);
  }
}

// Edge panel with nr < 8 live columns: row-wise axpy over the remainder.
template <std::size_t MR>
inline void tile_edge(std::size_t nr, std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t r = 0; r < MR; ++r) {
    double* __restrict cr = c + r * ldc;
    if (!accumulate) std::fill(cr, cr + nr, 0.0);
    const double* ar = a + r * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double* __restrict bp = b + p * ldb;
      const double av = ar[p];
      for (std::size_t j = 0; j < nr; ++j) cr[j] += av * bp[j];
    }
  }
}

template <std::size_t MR>
inline void row_panel(std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  std::size_t j = 0;
  for (; j + kTileCols <= n; j += kTileCols) tile_full<MR>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  if (j + 8 <= n) {
    tile_half<MR>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    j += 8;
  }
  if (j < n) tile_edge<MR>(n - j, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

// C rows [i0, i1) of C = A * B with A, B row-major.
void gemm_nn_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                  bool accumulate) {
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) row_panel<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
  for (; i < i1; ++i) row_panel<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
}

// Copies op(X) of size rows x cols into a dense row-major buffer.
std::vector<double> pack_transposed(const double* x, std::size_t ld, std::size_t rows,
                                    std::size_t cols) {
  // x stores the untransposed matrix (cols x rows) with row stride ld.
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < cols; ++r) {
    const double* src = x + r * ld;
    for (std::size_t q = 0; q < rows; ++q) out[q * cols + r] = src[q];
  }
  return out;
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  std::vector<double> a_packed;
  std::vector<double> b_packed;
  if (ta == Trans::Yes) {
    a_packed = pack_transposed(a, lda, m, k);
    a = a_packed.data();
    lda = k;
  }
  if (tb == Trans::Yes) {
    b_packed = pack_transposed(b, ldb, k, n);
    b = b_packed.data();
    ldb = n;
  }
  const std::size_t blocks = (m + 3) / 4;
  const bool parallel = m * n * k >= kParallelWork && blocks > 1 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * 4;
    const std::size_t i1 = std::min(m, i0 + 4);
    gemm_nn_rows(i0, i1, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

void softmax_rows(std::size_t rows, std::size_t n, const double* in, double* out) {
  const bool parallel = rows * n >= kParallelWork / 4 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
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
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
  }
}

void softmax_rows_backward(std::size_t rows, std::size_t n, const double* p, const double* dp,
                           double* dx) {
  const bool parallel = rows * n >= kParallelWork / 4 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pr = p + r * n;
    const double* dpr = dp + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += pr[j] * dpr[j];
    double* dxr = dx + r * n;
    for (std::size_t j = 0; j < n; ++j) dxr[j] = pr[j] * (dpr[j] - dot);
  }
}

void layer_norm_rows(std::size_t rows, std::size_t n, const double* x, double* y, double* rstd,
                     double eps) {
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool parallel = rows * n >= kParallelWork / 4 && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var *= inv_n;
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    double* yr = y + r * n;
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * rs;
  }
}

void gelu(std::size_t n, const double* x, double* y) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const bool parallel = n >= kParallelWork && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
}

void gelu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  const bool parallel = n >= kParallelWork && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

void set_num_threads(int threads) { omp_set_num_threads(std::max(1, threads)); }

int max_threads() { return omp_get_max_threads(); }

}  // namespace hgf::kernels
