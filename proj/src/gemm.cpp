#include "attredit/gemm.hpp"

#include <dlfcn.h>
#include <stdlib.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace attredit {
namespace {

// cblas row-major enums.
enum { kRowMajor = 101, kNoTrans = 111, kTrans = 112 };

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*,
                          int, const double*, int, double, double*, int);

struct Blas {
  sgemm_fn sgemm = nullptr;
  dgemm_fn dgemm = nullptr;
  const char* name = "builtin";
};

bool cpu_has_avx512() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx512f") &&
         __builtin_cpu_supports("avx512dq") &&
         __builtin_cpu_supports("avx512bw") &&
         __builtin_cpu_supports("avx512vl");
#else
  return false;
#endif
}

Blas load_blas() {
  Blas b;
  // OpenBLAS probes the CPU in a library constructor, and on some
  // virtualized hosts the probe lands on a generic kernel set. Loading
  // lazily lets us pin the core type before that probe runs.
  if (cpu_has_avx512()) setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  const char* candidates[] = {"libopenblas.so.0", "libopenblas.so"};
  for (const char* c : candidates) {
    void* h = dlopen(c, RTLD_NOW | RTLD_LOCAL);
    if (!h) continue;
    auto s = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
    auto d = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
    if (s && d) {
      b.sgemm = s;
      b.dgemm = d;
      b.name = "openblas";
      return b;
    }
    dlclose(h);
  }
  return b;
}

const Blas& blas() {
  static Blas b = load_blas();
  return b;
}

// Fallback: row-major tiled GEMM. Parallelized over row blocks of C, so
// each output element is written by exactly one thread and reduction
// order within a dot product is fixed.
template <typename S>
void gemm_builtin(bool ta, bool tb, int m, int n, int k, S alpha, const S* a,
                  int lda, const S* b, int ldb, S beta, S* c, int ldc) {
  auto at = [&](int i, int p) { return ta ? a[p * lda + i] : a[i * lda + p]; };
  auto bt = [&](int p, int j) { return tb ? b[j * ldb + p] : b[p * ldb + j]; };
  constexpr int BM = 32, BN = 64, BK = 64;
#pragma omp parallel for schedule(static)
  for (int i0 = 0; i0 < m; i0 += BM) {
    int i1 = std::min(i0 + BM, m);
    for (int i = i0; i < i1; ++i)
      for (int j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    for (int p0 = 0; p0 < k; p0 += BK) {
      int p1 = std::min(p0 + BK, k);
      for (int j0 = 0; j0 < n; j0 += BN) {
        int j1 = std::min(j0 + BN, n);
        for (int i = i0; i < i1; ++i)
          for (int p = p0; p < p1; ++p) {
            S av = alpha * at(i, p);
            const int row = i * ldc;
            for (int j = j0; j < j1; ++j) c[row + j] += av * bt(p, j);
          }
      }
    }
  }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  if (m == 0 || n == 0) return;
  const Blas& bl = blas();
  if (bl.sgemm) {
    bl.sgemm(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, m, n,
             k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  const Blas& bl = blas();
  if (bl.dgemm) {
    bl.dgemm(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, m, n,
             k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

const char* gemm_backend() { return blas().name; }

}  // namespace attredit
