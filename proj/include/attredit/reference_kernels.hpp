#pragma once

// Naive serial convolution kernels. Direct loop transcriptions of the
// defining sums, kept deliberately independent of the GEMM path: they are
// the oracle the fast kernels are tested against, and the baseline the
// benchmark compares against. Do not "optimize" these.

#include <algorithm>
#include <cstdint>

namespace attredit::ref {

template <typename S>
void conv2d(const S* x, const S* w, S* y, int n, int cin, int h, int win,
            int cout, int k, int stride, int pad, int oh, int ow) {
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < cout; ++co)
      for (int p = 0; p < oh; ++p)
        for (int q = 0; q < ow; ++q) {
          S acc = S(0);
          for (int ci = 0; ci < cin; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                int yy = p * stride + kh - pad;
                int xx = q * stride + kw - pad;
                if (yy < 0 || yy >= h || xx < 0 || xx >= win) continue;
                acc += w[((int64_t(co) * cin + ci) * k + kh) * k + kw] *
                       x[((int64_t(i) * cin + ci) * h + yy) * win + xx];
              }
          y[((int64_t(i) * cout + co) * oh + p) * ow + q] = acc;
        }
}

template <typename S>
void deconv2d(const S* x, const S* w, S* y, int n, int cin, int h, int win,
              int cout, int k, int stride, int pad, int outh, int outw) {
  std::fill(y, y + int64_t(n) * cout * outh * outw, S(0));
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < cin; ++ci)
      for (int p = 0; p < h; ++p)
        for (int q = 0; q < win; ++q) {
          S xv = x[((int64_t(i) * cin + ci) * h + p) * win + q];
          for (int co = 0; co < cout; ++co)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                int yy = p * stride + kh - pad;
                int xx = q * stride + kw - pad;
                if (yy < 0 || yy >= outh || xx < 0 || xx >= outw) continue;
                y[((int64_t(i) * cout + co) * outh + yy) * outw + xx] +=
                    xv * w[((int64_t(ci) * cout + co) * k + kh) * k + kw];
              }
        }
}

template <typename S>
void conv_wgrad(const S* p, const S* q, S* dw, int n, int cp, int ph, int pw,
                int cq, int qh, int qw, int k, int stride, int pad) {
  std::fill(dw, dw + int64_t(cp) * cq * k * k, S(0));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < cp; ++a)
      for (int b = 0; b < cq; ++b)
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            S acc = S(0);
            for (int oh = 0; oh < ph; ++oh)
              for (int ow = 0; ow < pw; ++ow) {
                int yy = oh * stride + kh - pad;
                int xx = ow * stride + kw - pad;
                if (yy < 0 || yy >= qh || xx < 0 || xx >= qw) continue;
                acc += p[((int64_t(i) * cp + a) * ph + oh) * pw + ow] *
                       q[((int64_t(i) * cq + b) * qh + yy) * qw + xx];
              }
            dw[((int64_t(a) * cq + b) * k + kh) * k + kw] += acc;
          }
}

}  // namespace attredit::ref
