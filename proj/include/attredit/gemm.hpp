#pragma once

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// Dispatches to a BLAS found at runtime, with a tiled OpenMP fallback.
// Both paths are deterministic for fixed inputs on a fixed machine.

#include <cstdint>

namespace attredit {

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// "openblas" or "builtin"; resolved once at first call.
const char* gemm_backend();

}  // namespace attredit
