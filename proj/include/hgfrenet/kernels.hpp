#pragma once

// Dense numeric kernels. The functions in hgf::kernels are the tuned, OpenMP
// parallel versions used by the model; hgf::kernels::reference holds plain
// serial loops with the same signatures that tests and benchmarks compare
// against.
//
// Parallel kernels split work over independent output rows only, so every
// output element is accumulated in the same order regardless of thread count.

#include <cstddef>

namespace hgf::kernels {

enum class Trans { No, Yes };

/// C[m,n] (+)= op(A)[m,k] * op(B)[k,n]. Leading dimensions are row strides of
/// the stored (untransposed) matrices.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate);

/// Row-wise numerically stable softmax over rows of length n.
void softmax_rows(std::size_t rows, std::size_t n, const double* in, double* out);

/// dx = p * (dp - <p, dp>) per row.
void softmax_rows_backward(std::size_t rows, std::size_t n, const double* p, const double* dp,
                           double* dx);

/// Normalizes each row to zero mean and unit variance; writes 1/sqrt(var+eps) per row.
void layer_norm_rows(std::size_t rows, std::size_t n, const double* x, double* y, double* rstd,
                     double eps);

/// Exact GELU, x * Phi(x).
void gelu(std::size_t n, const double* x, double* y);

/// dx = dy * gelu'(x).
void gelu_backward(std::size_t n, const double* x, const double* dy, double* dx);

void set_num_threads(int threads);
int max_threads();

namespace reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate);
void softmax_rows(std::size_t rows, std::size_t n, const double* in, double* out);
void softmax_rows_backward(std::size_t rows, std::size_t n, const double* p, const double* dp,
                           double* dx);
void layer_norm_rows(std::size_t rows, std::size_t n, const double* x, double* y, double* rstd,
                     double eps);
void gelu(std::size_t n, const double* x, double* y);
void gelu_backward(std::size_t n, const double* x, const double* dy, double* dx);

}  // namespace reference

}  // namespace hgf::kernels
