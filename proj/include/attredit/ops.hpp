#pragma once

// Differentiable primitives. Every vector-Jacobian product is written in
// terms of these same primitives, so any composition (including gradients
// of gradients) stays differentiable. Reductions use fixed serial
// accumulation order; elementwise maps parallelize over disjoint slices.

#include <cmath>
#include <cstring>

#include "attredit/kernels.hpp"
#include "attredit/tensor.hpp"

namespace attredit {

namespace detail {

template <typename S>
void require_same_shape(const char* op, const Tensor<S>& a,
                        const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
}

template <typename S, typename F>
std::vector<S> map_vals(const Tensor<S>& x, F f) {
  auto xs = x.values();
  std::vector<S> v(xs.size());
  const int64_t n = int64_t(xs.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) v[i] = f(xs[i]);
  return v;
}

template <typename S, typename F>
std::vector<S> zip_vals(const Tensor<S>& a, const Tensor<S>& b, F f) {
  auto as = a.values();
  auto bs = b.values();
  std::vector<S> v(as.size());
  const int64_t n = int64_t(as.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) v[i] = f(as[i], bs[i]);
  return v;
}

// [N,C,H,W] accessors used by the structured reductions.
template <typename S>
void require_4d(const char* op, const Tensor<S>& x) {
  if (x.ndim() != 4)
    throw ShapeError(cat(op, ": expected 4-d input, got ",
                         shape_str(x.shape())));
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("add", a, b);
  return make_op<S>("add", a.shape(),
                    detail::zip_vals(a, b, [](S x, S y) { return x + y; }),
                    {a, b},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{gy, gy};
                    });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return make_op<S>("neg", x.shape(),
                    detail::map_vals(x, [](S v) { return -v; }), {x},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{neg(gy)};
                    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("sub", a, b);
  return make_op<S>("sub", a.shape(),
                    detail::zip_vals(a, b, [](S x, S y) { return x - y; }),
                    {a, b},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{gy, neg(gy)};
                    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("mul", a, b);
  return make_op<S>("mul", a.shape(),
                    detail::zip_vals(a, b, [](S x, S y) { return x * y; }),
                    {a, b},
                    [a, b](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul(gy, b), mul(gy, a)};
                    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  return make_op<S>("scale", x.shape(),
                    detail::map_vals(x, [c](S v) { return v * c; }), {x},
                    [c](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{scale(gy, c)};
                    });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return make_op<S>("add_scalar", x.shape(),
                    detail::map_vals(x, [c](S v) { return v + c; }), {x},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{gy};
                    });
}

// Constant-coefficient elementwise multiplier (the coefficients carry no
// gradient). Shared by relu/leaky_relu/abs/clamp vjps.
template <typename S>
Tensor<S> mul_const(const Tensor<S>& x, std::shared_ptr<std::vector<S>> c) {
  auto xs = x.values();
  std::vector<S> v(xs.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = xs[i] * (*c)[i];
  return make_op<S>("mul_const", x.shape(), std::move(v), {x},
                    [c](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul_const(gy, c)};
                    });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  auto mask = std::make_shared<std::vector<S>>(x.numel());
  auto xs = x.values();
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = xs[i] > S(0) ? S(1) : S(0);
  return make_op<S>("relu",
                    x.shape(), detail::map_vals(x, [](S v) {
                      return v > S(0) ? v : S(0);
                    }),
                    {x}, [mask](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul_const(gy, mask)};
                    });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  auto mask = std::make_shared<std::vector<S>>(x.numel());
  auto xs = x.values();
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = xs[i] > S(0) ? S(1) : slope;
  return make_op<S>("leaky_relu",
                    x.shape(), detail::map_vals(x, [slope](S v) {
                      return v > S(0) ? v : slope * v;
                    }),
                    {x}, [mask](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul_const(gy, mask)};
                    });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  auto mask = std::make_shared<std::vector<S>>(x.numel());
  auto xs = x.values();
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = xs[i] > S(0) ? S(1) : (xs[i] < S(0) ? S(-1) : S(0));
  return make_op<S>("abs",
                    x.shape(),
                    detail::map_vals(x, [](S v) { return v < S(0) ? -v : v; }),
                    {x}, [mask](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul_const(gy, mask)};
                    });
}

// Gradient is 1 inside [lo,hi] inclusive of the boundary, 0 outside.
template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  auto mask = std::make_shared<std::vector<S>>(x.numel());
  auto xs = x.values();
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = (xs[i] >= lo && xs[i] <= hi) ? S(1) : S(0);
  return make_op<S>("clamp",
                    x.shape(), detail::map_vals(x, [lo, hi](S v) {
                      return v < lo ? lo : (v > hi ? hi : v);
                    }),
                    {x}, [mask](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul_const(gy, mask)};
                    });
}

template <typename S>
Tensor<S> clamp01(const Tensor<S>& x) {
  return clamp(x, S(0), S(1));
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return make_op<S>("sigmoid",
                    x.shape(), detail::map_vals(x, [](S v) {
                      return S(1) / (S(1) + std::exp(-v));
                    }),
                    {x}, [](const Tensor<S>& y, const Tensor<S>& gy) {
                      Tensor<S> one_minus = add_scalar(neg(y), S(1));
                      return std::vector<Tensor<S>>{mul(gy, mul(y, one_minus))};
                    });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return make_op<S>("tanh",
                    x.shape(),
                    detail::map_vals(x, [](S v) { return std::tanh(v); }), {x},
                    [](const Tensor<S>& y, const Tensor<S>& gy) {
                      Tensor<S> d = add_scalar(neg(mul(y, y)), S(1));
                      return std::vector<Tensor<S>>{mul(gy, d)};
                    });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return make_op<S>("log",
                    x.shape(),
                    detail::map_vals(x, [](S v) { return std::log(v); }), {x},
                    [x](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{mul(gy, reciprocal(x))};
                    });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return make_op<S>("sqrt",
                    x.shape(),
                    detail::map_vals(x, [](S v) { return std::sqrt(v); }), {x},
                    [](const Tensor<S>& y, const Tensor<S>& gy) {
                      Tensor<S> d = scale(reciprocal(y), S(0.5));
                      return std::vector<Tensor<S>>{mul(gy, d)};
                    });
}

template <typename S>
Tensor<S> reciprocal(const Tensor<S>& x) {
  return make_op<S>("reciprocal",
                    x.shape(),
                    detail::map_vals(x, [](S v) { return S(1) / v; }), {x},
                    [](const Tensor<S>& y, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{neg(mul(gy, mul(y, y)))};
                    });
}

// ---- reductions and broadcasts (closed adjoint pairs) ----

template <typename S>
Tensor<S> broadcast_all(const Tensor<S>& s, Shape shape);

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  auto xs = x.values();
  S acc = S(0);
  for (S v : xs) acc += v;
  Shape xshape = x.shape();
  return make_op<S>("sum", {1}, {acc}, {x},
                    [xshape](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{broadcast_all(gy, xshape)};
                    });
}

template <typename S>
Tensor<S> broadcast_all(const Tensor<S>& s, Shape shape) {
  if (s.numel() != 1)
    throw ShapeError(cat("broadcast_all: source has ", s.numel(),
                         " elements, expected 1"));
  std::vector<S> v(size_t(numel(shape)), s.values()[0]);
  return make_op<S>("broadcast_all", std::move(shape), std::move(v), {s},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum(gy)};
                    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  return scale(sum(x), S(1) / S(x.numel()));
}

template <typename S>
Tensor<S> broadcast_channel(const Tensor<S>& v, Shape shape);

// [N,C,H,W] -> [C]
template <typename S>
Tensor<S> sum_per_channel(const Tensor<S>& x) {
  detail::require_4d("sum_per_channel", x);
  int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<S> v(c, S(0));
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const S* p = xs.data() + (int64_t(i) * c + j) * hw;
      S acc = S(0);
      for (int t = 0; t < hw; ++t) acc += p[t];
      v[j] += acc;
    }
  Shape xshape = x.shape();
  return make_op<S>("sum_per_channel", {c}, std::move(v), {x},
                    [xshape](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          broadcast_channel(gy, xshape)};
                    });
}

// [C] -> [N,C,H,W]
template <typename S>
Tensor<S> broadcast_channel(const Tensor<S>& v, Shape shape) {
  if (shape.size() != 4 || v.ndim() != 1 || v.dim(0) != shape[1])
    throw ShapeError(cat("broadcast_channel: ", shape_str(v.shape()), " to ",
                         shape_str(shape)));
  int n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  std::vector<S> out(size_t(numel(shape)));
  auto vs = v.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      S* p = out.data() + (int64_t(i) * c + j) * hw;
      for (int t = 0; t < hw; ++t) p[t] = vs[j];
    }
  return make_op<S>("broadcast_channel", shape, std::move(out), {v},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum_per_channel(gy)};
                    });
}

template <typename S>
Tensor<S> broadcast_sample(const Tensor<S>& v, Shape shape);

// [N,...] -> [N]
template <typename S>
Tensor<S> sum_per_sample(const Tensor<S>& x) {
  if (x.ndim() < 2)
    throw ShapeError(cat("sum_per_sample: need at least 2-d, got ",
                         shape_str(x.shape())));
  int n = x.dim(0);
  int64_t rest = x.numel() / n;
  std::vector<S> v(n);
  auto xs = x.values();
  for (int i = 0; i < n; ++i) {
    S acc = S(0);
    const S* p = xs.data() + i * rest;
    for (int64_t t = 0; t < rest; ++t) acc += p[t];
    v[i] = acc;
  }
  Shape xshape = x.shape();
  return make_op<S>("sum_per_sample", {n}, std::move(v), {x},
                    [xshape](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          broadcast_sample(gy, xshape)};
                    });
}

// [N] -> [N,...]
template <typename S>
Tensor<S> broadcast_sample(const Tensor<S>& v, Shape shape) {
  if (v.ndim() != 1 || shape.empty() || v.dim(0) != shape[0])
    throw ShapeError(cat("broadcast_sample: ", shape_str(v.shape()), " to ",
                         shape_str(shape)));
  int n = shape[0];
  int64_t rest = numel(shape) / n;
  std::vector<S> out(size_t(numel(shape)));
  auto vs = v.values();
  for (int i = 0; i < n; ++i)
    for (int64_t t = 0; t < rest; ++t) out[i * rest + t] = vs[i];
  return make_op<S>("broadcast_sample", shape, std::move(out), {v},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum_per_sample(gy)};
                    });
}

template <typename S>
Tensor<S> expand_channels(const Tensor<S>& x, int c);

// [N,C,H,W] -> [N,1,H,W]
template <typename S>
Tensor<S> sum_channels(const Tensor<S>& x) {
  detail::require_4d("sum_channels", x);
  int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<S> v(size_t(n) * hw, S(0));
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const S* p = xs.data() + (int64_t(i) * c + j) * hw;
      S* o = v.data() + int64_t(i) * hw;
      for (int t = 0; t < hw; ++t) o[t] += p[t];
    }
  int ch = c;
  return make_op<S>("sum_channels", {n, 1, x.dim(2), x.dim(3)}, std::move(v),
                    {x}, [ch](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{expand_channels(gy, ch)};
                    });
}

// [N,1,H,W] -> [N,C,H,W]
template <typename S>
Tensor<S> expand_channels(const Tensor<S>& x, int c) {
  detail::require_4d("expand_channels", x);
  if (x.dim(1) != 1)
    throw ShapeError(cat("expand_channels: input has ", x.dim(1),
                         " channels, expected 1"));
  int n = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<S> v(size_t(n) * c * hw);
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      std::memcpy(v.data() + (int64_t(i) * c + j) * hw,
                  xs.data() + int64_t(i) * hw, sizeof(S) * hw);
  return make_op<S>("expand_channels", {n, c, x.dim(2), x.dim(3)},
                    std::move(v), {x},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum_channels(gy)};
                    });
}

template <typename S>
Tensor<S> sum_hw(const Tensor<S>& x);

// [N,C] -> [N,C,H,W]; used to inject per-sample attribute vectors into
// feature maps.
template <typename S>
Tensor<S> broadcast_tile(const Tensor<S>& v, int h, int w) {
  if (v.ndim() != 2)
    throw ShapeError(cat("broadcast_tile: expected [N,C], got ",
                         shape_str(v.shape())));
  int n = v.dim(0), c = v.dim(1);
  std::vector<S> out(size_t(n) * c * h * w);
  auto vs = v.values();
  for (int64_t i = 0; i < int64_t(n) * c; ++i)
    for (int t = 0; t < h * w; ++t) out[i * h * w + t] = vs[i];
  return make_op<S>("broadcast_tile", {n, c, h, w}, std::move(out), {v},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum_hw(gy)};
                    });
}

// [N,C,H,W] -> [N,C]
template <typename S>
Tensor<S> sum_hw(const Tensor<S>& x) {
  detail::require_4d("sum_hw", x);
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<S> v(size_t(n) * c);
  auto xs = x.values();
  for (int64_t i = 0; i < int64_t(n) * c; ++i) {
    S acc = S(0);
    const S* p = xs.data() + i * h * w;
    for (int t = 0; t < h * w; ++t) acc += p[t];
    v[i] = acc;
  }
  int hh = h, ww = w;
  return make_op<S>("sum_hw", {n, c}, std::move(v), {x},
                    [hh, ww](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          broadcast_tile(gy, hh, ww)};
                    });
}

template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& v, int n);

// [N,D] -> [D]
template <typename S>
Tensor<S> sum_rows(const Tensor<S>& x) {
  if (x.ndim() != 2)
    throw ShapeError(cat("sum_rows: expected [N,D], got ",
                         shape_str(x.shape())));
  int n = x.dim(0), d = x.dim(1);
  std::vector<S> v(d, S(0));
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) v[j] += xs[int64_t(i) * d + j];
  return make_op<S>("sum_rows", {d}, std::move(v), {x},
                    [n](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{broadcast_rows(gy, n)};
                    });
}

// [D] -> [N,D]
template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& v, int n) {
  if (v.ndim() != 1)
    throw ShapeError(cat("broadcast_rows: expected [D], got ",
                         shape_str(v.shape())));
  int d = v.dim(0);
  std::vector<S> out(size_t(n) * d);
  auto vs = v.values();
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + int64_t(i) * d, vs.data(), sizeof(S) * d);
  return make_op<S>("broadcast_rows", {n, d}, std::move(out), {v},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sum_rows(gy)};
                    });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError(cat("reshape: ", shape_str(x.shape()), " to ",
                         shape_str(shape), " changes element count"));
  std::vector<S> v(x.values().begin(), x.values().end());
  Shape xshape = x.shape();
  return make_op<S>("reshape", std::move(shape), std::move(v), {x},
                    [xshape](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{reshape(gy, xshape)};
                    });
}

// [N,C,H,W] -> [N,C*H*W]
template <typename S>
Tensor<S> flatten2(const Tensor<S>& x) {
  return reshape(x, {x.dim(0), int(x.numel() / x.dim(0))});
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, int start, int count);

template <typename S>
Tensor<S> channel_pad(const Tensor<S>& x, int start, int total);

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int ctot = 0;
  for (const auto& p : parts) {
    detail::require_4d("concat_channels", p);
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
      throw ShapeError(cat("concat_channels: mismatched part ",
                           shape_str(p.shape())));
    ctot += p.dim(1);
  }
  std::vector<S> v(size_t(n) * ctot * h * w);
  int64_t hw = int64_t(h) * w;
  int off = 0;
  std::vector<int> offsets, counts;
  for (const auto& p : parts) {
    int c = p.dim(1);
    auto ps = p.values();
    for (int i = 0; i < n; ++i)
      std::memcpy(v.data() + ((int64_t(i) * ctot + off) * hw),
                  ps.data() + int64_t(i) * c * hw, sizeof(S) * c * hw);
    offsets.push_back(off);
    counts.push_back(c);
    off += c;
  }
  return make_op<S>("concat_channels", {n, ctot, h, w}, std::move(v), parts,
                    [offsets, counts](const Tensor<S>&, const Tensor<S>& gy) {
                      std::vector<Tensor<S>> gs;
                      for (size_t i = 0; i < offsets.size(); ++i)
                        gs.push_back(
                            slice_channels(gy, offsets[i], counts[i]));
                      return gs;
                    });
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, int start, int count) {
  detail::require_4d("slice_channels", x);
  if (start < 0 || count <= 0 || start + count > x.dim(1))
    throw ShapeError(cat("slice_channels: [", start, ",", start + count,
                         ") out of ", x.dim(1), " channels"));
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t hw = int64_t(h) * w;
  std::vector<S> v(size_t(n) * count * hw);
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    std::memcpy(v.data() + int64_t(i) * count * hw,
                xs.data() + (int64_t(i) * c + start) * hw,
                sizeof(S) * count * hw);
  int ctot = c;
  return make_op<S>("slice_channels", {n, count, h, w}, std::move(v), {x},
                    [start, ctot](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          channel_pad(gy, start, ctot)};
                    });
}

// Embeds x into a zero tensor with `total` channels at channel offset
// `start`; adjoint of slice_channels.
template <typename S>
Tensor<S> channel_pad(const Tensor<S>& x, int start, int total) {
  detail::require_4d("channel_pad", x);
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (start < 0 || start + c > total)
    throw ShapeError(cat("channel_pad: [", start, ",", start + c, ") out of ",
                         total, " channels"));
  int64_t hw = int64_t(h) * w;
  std::vector<S> v(size_t(n) * total * hw, S(0));
  auto xs = x.values();
  for (int i = 0; i < n; ++i)
    std::memcpy(v.data() + (int64_t(i) * total + start) * hw,
                xs.data() + int64_t(i) * c * hw, sizeof(S) * c * hw);
  int cnt = c;
  return make_op<S>("channel_pad", {n, total, h, w}, std::move(v), {x},
                    [start, cnt](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          slice_channels(gy, start, cnt)};
                    });
}

template <typename S>
Tensor<S> col_embed(const Tensor<S>& x, int total, int col);

// Extracts column `col` of a [N,D] matrix as a [N] vector.
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, int col) {
  if (x.ndim() != 2 || col < 0 || col >= x.dim(1))
    throw ShapeError(
        cat("slice_cols: column ", col, " of ", shape_str(x.shape())));
  int n = x.dim(0), d = x.dim(1);
  std::vector<S> v(n);
  auto xs = x.values();
  for (int i = 0; i < n; ++i) v[i] = xs[int64_t(i) * d + col];
  return make_op<S>("slice_cols", {n}, std::move(v), {x},
                    [d, col](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{col_embed(gy, d, col)};
                    });
}

// Embeds a [N] vector as column `col` of an otherwise zero [N,total]
// matrix; adjoint of slice_cols.
template <typename S>
Tensor<S> col_embed(const Tensor<S>& x, int total, int col) {
  if (x.ndim() != 1 || col < 0 || col >= total)
    throw ShapeError(
        cat("col_embed: column ", col, " of width ", total));
  int n = x.dim(0);
  std::vector<S> v(size_t(n) * total, S(0));
  auto xs = x.values();
  for (int i = 0; i < n; ++i) v[int64_t(i) * total + col] = xs[i];
  return make_op<S>("col_embed", {n, total}, std::move(v), {x},
                    [col](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{slice_cols(gy, col)};
                    });
}

template <typename S>
Tensor<S> sumpool2x(const Tensor<S>& x);

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  detail::require_4d("upsample_nearest2x", x);
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<S> v(size_t(n) * c * 4 * h * w);
  auto xs = x.values();
  for (int64_t i = 0; i < int64_t(n) * c; ++i) {
    const S* src = xs.data() + i * h * w;
    S* dst = v.data() + i * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xcol = 0; xcol < w; ++xcol) {
        S val = src[y * w + xcol];
        S* d = dst + (2 * y) * (2 * w) + 2 * xcol;
        d[0] = val;
        d[1] = val;
        d[2 * w] = val;
        d[2 * w + 1] = val;
      }
  }
  return make_op<S>("upsample_nearest2x", {n, c, 2 * h, 2 * w}, std::move(v),
                    {x}, [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{sumpool2x(gy)};
                    });
}

// Non-overlapping 2x2 window sums; adjoint of upsample_nearest2x.
template <typename S>
Tensor<S> sumpool2x(const Tensor<S>& x) {
  detail::require_4d("sumpool2x", x);
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2)
    throw ShapeError(cat("sumpool2x: odd spatial size ", shape_str(x.shape())));
  int oh = h / 2, ow = w / 2;
  std::vector<S> v(size_t(n) * c * oh * ow);
  auto xs = x.values();
  for (int64_t i = 0; i < int64_t(n) * c; ++i) {
    const S* src = xs.data() + i * h * w;
    S* dst = v.data() + i * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xcol = 0; xcol < ow; ++xcol) {
        const S* s = src + (2 * y) * w + 2 * xcol;
        dst[y * ow + xcol] = s[0] + s[1] + s[w] + s[w + 1];
      }
  }
  return make_op<S>("sumpool2x", {n, c, oh, ow}, std::move(v), {x},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{upsample_nearest2x(gy)};
                    });
}

template <typename S>
Tensor<S> maxpool_scatter(const Tensor<S>& gy,
                          std::shared_ptr<std::vector<int64_t>> idx,
                          Shape in_shape);

template <typename S>
Tensor<S> maxpool_gather(const Tensor<S>& g,
                         std::shared_ptr<std::vector<int64_t>> idx,
                         Shape out_shape);

// Window max; ties resolve to the first element in row-major window order.
template <typename S>
Tensor<S> maxpool(const Tensor<S>& x, int k, int stride) {
  detail::require_4d("maxpool", x);
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < k || w < k)
    throw ShapeError(cat("maxpool: window ", k, " exceeds input ",
                         shape_str(x.shape())));
  int oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  std::vector<S> v(size_t(n) * c * oh * ow);
  auto idx = std::make_shared<std::vector<int64_t>>(v.size());
  auto xs = x.values();
  for (int64_t i = 0; i < int64_t(n) * c; ++i) {
    const S* src = xs.data() + i * h * w;
    for (int y = 0; y < oh; ++y)
      for (int xcol = 0; xcol < ow; ++xcol) {
        int64_t best = (int64_t(y) * stride) * w + xcol * stride;
        S bv = src[best];
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            int64_t p = (int64_t(y) * stride + dy) * w + xcol * stride + dx;
            if (src[p] > bv) {
              bv = src[p];
              best = p;
            }
          }
        v[i * oh * ow + y * ow + xcol] = bv;
        (*idx)[i * oh * ow + y * ow + xcol] = i * h * w + best;
      }
  }
  Shape xshape = x.shape();
  return make_op<S>("maxpool", {n, c, oh, ow}, std::move(v), {x},
                    [idx, xshape](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{
                          maxpool_scatter(gy, idx, xshape)};
                    });
}

template <typename S>
Tensor<S> maxpool_scatter(const Tensor<S>& gy,
                          std::shared_ptr<std::vector<int64_t>> idx,
                          Shape in_shape) {
  std::vector<S> v(size_t(numel(in_shape)), S(0));
  auto gs = gy.values();
  for (size_t i = 0; i < gs.size(); ++i) v[size_t((*idx)[i])] += gs[i];
  Shape oshape = gy.shape();
  return make_op<S>("maxpool_scatter", std::move(in_shape), std::move(v), {gy},
                    [idx, oshape](const Tensor<S>&, const Tensor<S>& gy2) {
                      return std::vector<Tensor<S>>{
                          maxpool_gather(gy2, idx, oshape)};
                    });
}

template <typename S>
Tensor<S> maxpool_gather(const Tensor<S>& g,
                         std::shared_ptr<std::vector<int64_t>> idx,
                         Shape out_shape) {
  std::vector<S> v(size_t(numel(out_shape)));
  auto gs = g.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = gs[size_t((*idx)[i])];
  Shape gshape = g.shape();
  return make_op<S>("maxpool_gather", std::move(out_shape), std::move(v), {g},
                    [idx, gshape](const Tensor<S>&, const Tensor<S>& gy2) {
                      return std::vector<Tensor<S>>{
                          maxpool_scatter(gy2, idx, gshape)};
                    });
}

// ---- convolution family ----
// conv2d, deconv2d and conv_wgrad form a closed set: each one's vjp is
// built from the other two on the same weight buffer, so arbitrary-order
// derivatives work without any layout shuffling.

template <typename S>
Tensor<S> deconv2d_sized(const Tensor<S>& x, const Tensor<S>& w, int stride,
                         int pad, int outh, int outw);

template <typename S>
Tensor<S> conv_wgrad(const Tensor<S>& p, const Tensor<S>& q, int k,
                     int stride, int pad);

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, int stride,
                 int pad) {
  detail::require_4d("conv2d", x);
  detail::require_4d("conv2d", w);
  int n = x.dim(0), cin = x.dim(1), h = x.dim(2), win = x.dim(3);
  int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin)
    throw ShapeError(cat("conv2d: input channels ", cin, " vs weight ",
                         w.dim(1)));
  if (w.dim(3) != k) throw ShapeError("conv2d: non-square kernel");
  if (h + 2 * pad < k || win + 2 * pad < k)
    throw ShapeError(cat("conv2d: kernel ", k, " exceeds padded input ",
                         shape_str(x.shape()), " pad ", pad));
  int oh = conv_out_size(h, k, stride, pad);
  int ow = conv_out_size(win, k, stride, pad);
  std::vector<S> v(size_t(n) * cout * oh * ow);
  conv2d_kernel(x.values().data(), w.values().data(), v.data(), n, cin, h,
                win, cout, k, stride, pad, oh, ow);
  return make_op<S>(
      "conv2d", {n, cout, oh, ow}, std::move(v), {x, w},
      [x, w, stride, pad, h, win, k](const Tensor<S>&, const Tensor<S>& gy) {
        Tensor<S> dx = deconv2d_sized(gy, w, stride, pad, h, win);
        Tensor<S> dw = conv_wgrad(gy, x, k, stride, pad);
        return std::vector<Tensor<S>>{dx, dw};
      });
}

template <typename S>
Tensor<S> deconv2d_sized(const Tensor<S>& x, const Tensor<S>& w, int stride,
                         int pad, int outh, int outw) {
  detail::require_4d("deconv2d", x);
  detail::require_4d("deconv2d", w);
  int n = x.dim(0), cin = x.dim(1), h = x.dim(2), win = x.dim(3);
  int cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin)
    throw ShapeError(cat("deconv2d: input channels ", cin, " vs weight ",
                         w.dim(0)));
  int th = outh + 2 * pad - k;
  int tw = outw + 2 * pad - k;
  if (th < 0 || tw < 0 || th / stride + 1 != h || tw / stride + 1 != win)
    throw ShapeError(cat("deconv2d: output ", outh, "x", outw,
                         " inconsistent with input ", shape_str(x.shape()),
                         " k ", k, " stride ", stride, " pad ", pad));
  std::vector<S> v(size_t(n) * cout * outh * outw);
  deconv2d_kernel(x.values().data(), w.values().data(), v.data(), n, cin, h,
                  win, cout, k, stride, pad, outh, outw);
  return make_op<S>(
      "deconv2d", {n, cout, outh, outw}, std::move(v), {x, w},
      [x, w, stride, pad, k](const Tensor<S>&, const Tensor<S>& gy) {
        Tensor<S> dx = conv2d(gy, w, stride, pad);
        Tensor<S> dw = conv_wgrad(x, gy, k, stride, pad);
        return std::vector<Tensor<S>>{dx, dw};
      });
}

template <typename S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& w, int stride,
                   int pad, int out_pad = 0) {
  int k = w.dim(2);
  int outh = deconv_out_size(x.dim(2), k, stride, pad, out_pad);
  int outw = deconv_out_size(x.dim(3), k, stride, pad, out_pad);
  return deconv2d_sized(x, w, stride, pad, outh, outw);
}

// dw[a,b,kh,kw] = sum_{n,i,j} p[n,a,i,j] * q_pad[n,b,i*s+kh-pad,j*s+kw-pad]
template <typename S>
Tensor<S> conv_wgrad(const Tensor<S>& p, const Tensor<S>& q, int k,
                     int stride, int pad) {
  detail::require_4d("conv_wgrad", p);
  detail::require_4d("conv_wgrad", q);
  if (p.dim(0) != q.dim(0))
    throw ShapeError(cat("conv_wgrad: batch ", p.dim(0), " vs ", q.dim(0)));
  int n = p.dim(0), cp = p.dim(1), ph = p.dim(2), pw = p.dim(3);
  int cq = q.dim(1), qh = q.dim(2), qw = q.dim(3);
  std::vector<S> v(size_t(cp) * cq * k * k);
  conv_wgrad_kernel(p.values().data(), q.values().data(), v.data(), n, cp, ph,
                    pw, cq, qh, qw, k, stride, pad);
  return make_op<S>(
      "conv_wgrad", {cp, cq, k, k}, std::move(v), {p, q},
      [p, q, stride, pad, qh, qw](const Tensor<S>&, const Tensor<S>& gw) {
        Tensor<S> dp = conv2d(q, gw, stride, pad);
        Tensor<S> dq = deconv2d_sized(p, gw, stride, pad, qh, qw);
        return std::vector<Tensor<S>>{dp, dq};
      });
}

template <typename S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
  detail::require_4d("add_channel_bias", x);
  if (b.ndim() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError(cat("add_channel_bias: bias ", shape_str(b.shape()),
                         " for input ", shape_str(x.shape())));
  int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<S> v(x.values().begin(), x.values().end());
  auto bs = b.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      S* ptr = v.data() + (int64_t(i) * c + j) * hw;
      for (int t = 0; t < hw; ++t) ptr[t] += bs[j];
    }
  return make_op<S>("add_channel_bias", x.shape(), std::move(v), {x, b},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{gy, sum_per_channel(gy)};
                    });
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride, int pad) {
  return add_channel_bias(conv2d(x, w, stride, pad), b);
}

template <typename S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                   int stride, int pad, int out_pad = 0) {
  return add_channel_bias(deconv2d(x, w, stride, pad, out_pad), b);
}

// y = op(a) * op(b) with optional transposes.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false,
                 bool tb = false) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError(cat("matmul: expected 2-d, got ", shape_str(a.shape()),
                         " and ", shape_str(b.shape())));
  int m = ta ? a.dim(1) : a.dim(0);
  int ka = ta ? a.dim(0) : a.dim(1);
  int kb = tb ? b.dim(1) : b.dim(0);
  int nn = tb ? b.dim(0) : b.dim(1);
  if (ka != kb)
    throw ShapeError(cat("matmul: inner dims ", ka, " vs ", kb, " (",
                         shape_str(a.shape()), ta ? "^T" : "", " x ",
                         shape_str(b.shape()), tb ? "^T" : "", ")"));
  std::vector<S> v(size_t(m) * nn, S(0));
  gemm(ta, tb, m, nn, ka, S(1), a.values().data(), a.dim(1),
       b.values().data(), b.dim(1), S(0), v.data(), nn);
  return make_op<S>(
      "matmul", {m, nn}, std::move(v), {a, b},
      [a, b, ta, tb](const Tensor<S>&, const Tensor<S>& gy) {
        Tensor<S> da = ta ? matmul(b, gy, tb, true) : matmul(gy, b, false, !tb);
        Tensor<S> db = tb ? matmul(gy, a, true, ta) : matmul(a, gy, !ta, false);
        return std::vector<Tensor<S>>{da, db};
      });
}

template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError(cat("add_rowvec: ", shape_str(x.shape()), " + ",
                         shape_str(b.shape())));
  int n = x.dim(0), d = x.dim(1);
  std::vector<S> v(x.values().begin(), x.values().end());
  auto bs = b.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) v[int64_t(i) * d + j] += bs[j];
  return make_op<S>("add_rowvec", x.shape(), std::move(v), {x, b},
                    [](const Tensor<S>&, const Tensor<S>& gy) {
                      return std::vector<Tensor<S>>{gy, sum_rows(gy)};
                    });
}

// y[N,Dout] = x[N,Din] * w[Dout,Din]^T + b
template <typename S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w,
                          const Tensor<S>& b) {
  return add_rowvec(matmul(x, w, false, true), b);
}

namespace detail {
template <typename S>
Tensor<S> add_grads(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
}  // namespace detail

template <typename S>
void check_finite(const Tensor<S>& t, const char* what) {
  for (S v : t.values())
    if (!std::isfinite(double(v)))
      throw NumericError(cat(what, ": non-finite value"));
}

template <typename S>
Tensor<S> zeros_like(const Tensor<S>& x) {
  return Tensor<S>::zeros(x.shape());
}

template <typename S>
Tensor<S> ones_like(const Tensor<S>& x) {
  return Tensor<S>::full(x.shape(), S(1));
}

}  // namespace attredit
