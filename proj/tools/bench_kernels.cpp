// Compares the OpenMP + GEMM convolution kernels against the naive serial
// reference on training-realistic shapes and reports timings, speedups, and
// the max. absolute deviation between the two paths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "attredit/gemm.hpp"
#include "attredit/kernels.hpp"
#include "attredit/reference_kernels.hpp"
#include "attredit/rng.hpp"

using namespace attredit;
using clk = std::chrono::steady_clock;

namespace {

double ms_since(clk::time_point t0) {
  return std::chrono::duration<double, std::milli>(clk::now() - t0).count();
}

std::vector<float> randn(Rng& rng, int64_t n) {
  std::vector<float> v(size_t(n), 0.0f);
  for (auto& x : v) x = float(rng.normal());
  return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, double(std::fabs(a[i] - b[i])));
  return m;
}

struct Case {
  const char* name;
  int n, cin, h, cout, k, stride, pad;
};

template <typename FastF, typename RefF>
void bench_one(const char* what, FastF fast, RefF slow, int64_t out_elems,
               double flops) {
  std::vector<float> y_fast(size_t(out_elems), 0.0f), y_ref(size_t(out_elems), 0.0f);
  // Warm-up also populates the buffers for the deviation check.
  fast(y_fast.data());
  slow(y_ref.data());
  double dev = max_abs_diff(y_fast, y_ref);

  int reps = 5;
  auto t0 = clk::now();
  for (int r = 0; r < reps; ++r) fast(y_fast.data());
  double fast_ms = ms_since(t0) / reps;
  t0 = clk::now();
  slow(y_ref.data());
  double ref_ms = ms_since(t0);

  std::printf("%-34s %9.2f ms %9.2f ms %7.1fx %8.2f GFLOP/s  max|d|=%.3g\n",
              what, ref_ms, fast_ms, ref_ms / fast_ms,
              flops / (fast_ms * 1e6), dev);
}

}  // namespace

int main() {
  std::printf("GEMM backend: %s\n\n", gemm_backend());
  std::printf("%-34s %12s %12s %8s %15s\n", "kernel (n,cin,h,cout,k,s,p)",
              "serial", "parallel", "speedup", "throughput");

  const Case cases[] = {
      {"conv 32x3x32 -> 16 k4s2", 32, 3, 32, 16, 4, 2, 1},
      {"conv 32x16x16 -> 32 k4s2", 32, 16, 16, 32, 4, 2, 1},
      {"conv 32x64x4 -> 128 k4s2", 32, 64, 4, 128, 4, 2, 1},
      {"conv 32x128x8 -> 128 k3s1", 32, 128, 8, 128, 3, 1, 1},
  };
  Rng rng(4242);
  for (const auto& c : cases) {
    int oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
    auto x = randn(rng, int64_t(c.n) * c.cin * c.h * c.h);
    auto w = randn(rng, int64_t(c.cout) * c.cin * c.k * c.k);
    int64_t out = int64_t(c.n) * c.cout * oh * oh;
    double flops = 2.0 * out * c.cin * c.k * c.k;
    char label[64];
    std::snprintf(label, sizeof label, "conv2d  n%d %dx%dx%d->%d k%ds%d",
                  c.n, c.cin, c.h, c.h, c.cout, c.k, c.stride);
    bench_one(
        label,
        [&](float* y) {
          conv2d_kernel(x.data(), w.data(), y, c.n, c.cin, c.h, c.h, c.cout,
                        c.k, c.stride, c.pad, oh, oh);
        },
        [&](float* y) {
          ref::conv2d(x.data(), w.data(), y, c.n, c.cin, c.h, c.h, c.cout,
                      c.k, c.stride, c.pad, oh, oh);
        },
        out, flops);

    // Matching transposed convolution: oh -> h upsampling with the same w
    // layout transposed to [cin(out side), cout, k, k].
    auto xd = randn(rng, int64_t(c.n) * c.cout * oh * oh);
    auto wd = randn(rng, int64_t(c.cout) * c.cin * c.k * c.k);
    int64_t dout = int64_t(c.n) * c.cin * c.h * c.h;
    std::snprintf(label, sizeof label, "deconv2d n%d %dx%dx%d->%d k%ds%d",
                  c.n, c.cout, oh, oh, c.cin, c.k, c.stride);
    bench_one(
        label,
        [&](float* y) {
          deconv2d_kernel(xd.data(), wd.data(), y, c.n, c.cout, oh, oh,
                          c.cin, c.k, c.stride, c.pad, c.h, c.h);
        },
        [&](float* y) {
          ref::deconv2d(xd.data(), wd.data(), y, c.n, c.cout, oh, oh, c.cin,
                        c.k, c.stride, c.pad, c.h, c.h);
        },
        dout, 2.0 * out * c.cin * c.k * c.k);

    int64_t wout = int64_t(c.cout) * c.cin * c.k * c.k;
    std::snprintf(label, sizeof label, "wgrad   n%d %dx%dx%d->%d k%ds%d",
                  c.n, c.cin, c.h, c.h, c.cout, c.k, c.stride);
    bench_one(
        label,
        [&](float* dw) {
          conv_wgrad_kernel(xd.data(), x.data(), dw, c.n, c.cout, oh, oh,
                            c.cin, c.h, c.h, c.k, c.stride, c.pad);
        },
        [&](float* dw) {
          ref::conv_wgrad(xd.data(), x.data(), dw, c.n, c.cout, oh, oh,
                          c.cin, c.h, c.h, c.k, c.stride, c.pad);
        },
        wout, flops);
  }
  return 0;
}
