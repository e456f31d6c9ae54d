#pragma once

#include <cblas.h>

#include <cstdlib>

namespace xgait::nn {

// BLAS threading is pinned once per process. One thread is the default:
// the conv GEMMs here are small enough that thread fan-out usually loses,
// and a fixed count keeps results byte-reproducible. XGAIT_BLAS_THREADS
// overrides (results then reproduce only for that same setting).
inline void pin_blas_threads() {
  static bool done = false;
  if (done) return;
  done = true;
  int n = 1;
  if (const char* env = std::getenv("XGAIT_BLAS_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) n = v;
  }
  openblas_set_num_threads(n);
}

// Row-major C[M,N] = alpha * op(A) * op(B) + beta * C
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace xgait::nn
