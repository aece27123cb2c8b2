#pragma once

// Convolution-family kernels, im2col + GEMM formulation.
//
// Layouts:
//   conv weight   [Cout, Cin, k, k]
//   deconv weight [Cin, Cout, k, k]
//   activations   [N, C, H, W], row-major
//
// Parallel loops only ever split disjoint output slices and keep inner
// reduction order fixed, so results are identical for any thread count.

#include <vector>

#include "attredit/common.hpp"
#include "attredit/gemm.hpp"

namespace attredit {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int deconv_out_size(int in, int k, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + k + out_pad;
}

// cols is [C*k*k, oh*ow]; entry ((c*k+kh)*k+kw, oh*ow_index) samples
// x[c, oh*stride+kh-pad, ow*stride+kw-pad] with zero padding.
template <typename S>
void im2col(const S* x, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, S* cols) {
  for (int ci = 0; ci < c; ++ci) {
    const S* xc = x + int64_t(ci) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        S* row = cols + (int64_t(ci) * k * k + kh * k + kw) * oh * ow;
        for (int i = 0; i < oh; ++i) {
          int yy = i * stride + kh - pad;
          if (yy < 0 || yy >= h) {
            for (int j = 0; j < ow; ++j) row[i * ow + j] = S(0);
            continue;
          }
          const S* xrow = xc + int64_t(yy) * w;
          for (int j = 0; j < ow; ++j) {
            int xx = j * stride + kw - pad;
            row[i * ow + j] = (xx < 0 || xx >= w) ? S(0) : xrow[xx];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds cols back into x (x must be zeroed by
// the caller). Serial per sample; accumulation order is fixed.
template <typename S>
void col2im(const S* cols, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, S* x) {
  for (int ci = 0; ci < c; ++ci) {
    S* xc = x + int64_t(ci) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const S* row = cols + (int64_t(ci) * k * k + kh * k + kw) * oh * ow;
        for (int i = 0; i < oh; ++i) {
          int yy = i * stride + kh - pad;
          if (yy < 0 || yy >= h) continue;
          S* xrow = xc + int64_t(yy) * w;
          for (int j = 0; j < ow; ++j) {
            int xx = j * stride + kw - pad;
            if (xx >= 0 && xx < w) xrow[xx] += row[i * ow + j];
          }
        }
      }
    }
  }
}

// y[n,co,oh,ow] = sum_{ci,kh,kw} w[co,ci,kh,kw] * x_pad[n,ci,...]
template <typename S>
void conv2d_kernel(const S* x, const S* w, S* y, int n, int cin, int h,
                   int win, int cout, int k, int stride, int pad, int oh,
                   int ow) {
  const int64_t rows = int64_t(cin) * k * k;
  const int64_t xs = int64_t(cin) * h * win;
  const int64_t ys = int64_t(cout) * oh * ow;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<S> cols(rows * oh * ow);
    im2col(x + i * xs, cin, h, win, k, stride, pad, oh, ow, cols.data());
    gemm(false, false, cout, oh * ow, int(rows), S(1), w, int(rows),
         cols.data(), oh * ow, S(0), y + i * ys, oh * ow);
  }
}

// y[n,co,:,:] += sum_{ci,kh,kw} w[ci,co,kh,kw] scattered from x[n,ci,:,:].
// Output size is passed explicitly (resolves the stride ambiguity).
template <typename S>
void deconv2d_kernel(const S* x, const S* w, S* y, int n, int cin, int h,
                     int win, int cout, int k, int stride, int pad, int outh,
                     int outw) {
  const int64_t rows = int64_t(cout) * k * k;
  const int64_t xs = int64_t(cin) * h * win;
  const int64_t ys = int64_t(cout) * outh * outw;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<S> cols(rows * h * win);
    // cols = w^T [cout*k*k, cin] * x_n [cin, h*win]
    gemm(true, false, int(rows), h * win, cin, S(1), w, int(rows),
         x + i * xs, h * win, S(0), cols.data(), h * win);
    S* yi = y + i * ys;
    for (int64_t j = 0; j < ys; ++j) yi[j] = S(0);
    col2im(cols.data(), cout, outh, outw, k, stride, pad, h, win, yi);
  }
}

// dw[cp,cq,kh,kw] = sum_{n,i,j} p[n,cp,i,j] * q_pad[n,cq,i*s+kh-pad,j*s+kw-pad]
// Shared weight-gradient form: conv wgrad uses (p=gy, q=x), deconv wgrad
// uses (p=x, q=gy). Accumulates over samples in fixed order.
template <typename S>
void conv_wgrad_kernel(const S* p, const S* q, S* dw, int n, int cp, int ph,
                       int pw, int cq, int qh, int qw, int k, int stride,
                       int pad) {
  const int64_t rows = int64_t(cq) * k * k;
  const int64_t pstride = int64_t(cp) * ph * pw;
  const int64_t qstride = int64_t(cq) * qh * qw;
  for (int64_t j = 0; j < cp * rows; ++j) dw[j] = S(0);
  std::vector<S> cols(rows * ph * pw);
  for (int i = 0; i < n; ++i) {
    im2col(q + i * qstride, cq, qh, qw, k, stride, pad, ph, pw, cols.data());
    gemm(false, true, cp, int(rows), ph * pw, S(1), p + i * pstride, ph * pw,
         cols.data(), ph * pw, S(1), dw, int(rows));
  }
}

}  // namespace attredit
