#pragma once

// Model definitions: the attribute-editing generator (encoder + per-level
// attentive editors), the critic/classifier pair, and the standalone
// attribute predictor used as an evaluation oracle.
//
// The generator edits inside learned masks, coarse to fine. At each level
// k (3 down to 0) it proposes edited features e_k from the level above,
// refines per-attribute masks by a residual update on the upsampled masks
// from the level above, merges the masks of the attributes actually being
// changed, and blends: f_b = m * e + (1 - m) * f_a. Level 0 operates on
// the image itself, so pixels with merged mask 0 pass through untouched.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "attredit/ops.hpp"
#include "attredit/rng.hpp"

namespace attredit {

template <typename S>
struct ParamStore {
  std::vector<std::pair<std::string, Tensor<S>>> trainable;
  std::vector<std::pair<std::string, Tensor<S>>> buffers;

  Tensor<S> param(const std::string& name, Tensor<S> t) {
    t.set_requires_grad(true);
    trainable.emplace_back(name, t);
    return t;
  }
  Tensor<S> buffer(const std::string& name, Tensor<S> t) {
    buffers.emplace_back(name, t);
    return t;
  }
  std::vector<Tensor<S>> params() const {
    std::vector<Tensor<S>> v;
    v.reserve(trainable.size());
    for (const auto& [n, t] : trainable) v.push_back(t);
    return v;
  }
  int64_t count() const {
    int64_t c = 0;
    for (const auto& [n, t] : trainable) c += t.numel();
    return c;
  }
  void zero_grads() {
    for (auto& [n, t] : trainable) t.zero_grad();
  }
};

template <typename S>
Tensor<S> he_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / double(fan_in));
  std::vector<S> v(size_t(numel(shape)));
  for (auto& x : v) x = S(rng.uniform(-limit, limit));
  return Tensor<S>::from_vec(std::move(shape), std::move(v));
}

template <typename S>
struct ConvLayer {
  Tensor<S> w, b;
  int stride = 1, pad = 0;
  Tensor<S> forward(const Tensor<S>& x) const {
    return add_channel_bias(conv2d(x, w, stride, pad), b);
  }
};

template <typename S>
ConvLayer<S> make_conv(ParamStore<S>& ps, const std::string& name, int cin,
                       int cout, int k, int stride, int pad, Rng& rng) {
  ConvLayer<S> c;
  c.w = ps.param(name + ".w",
                 he_uniform<S>({cout, cin, k, k}, int64_t(cin) * k * k, rng));
  c.b = ps.param(name + ".b", Tensor<S>::zeros({cout}));
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename S>
struct DeconvLayer {
  Tensor<S> w, b;
  int stride = 1, pad = 0, out_pad = 0;
  Tensor<S> forward(const Tensor<S>& x) const {
    return add_channel_bias(deconv2d(x, w, stride, pad, out_pad), b);
  }
};

template <typename S>
DeconvLayer<S> make_deconv(ParamStore<S>& ps, const std::string& name,
                           int cin, int cout, int k, int stride, int pad,
                           int out_pad, Rng& rng, bool zero_init = false) {
  DeconvLayer<S> d;
  d.w = ps.param(name + ".w",
                 zero_init ? Tensor<S>::zeros({cin, cout, k, k})
                           : he_uniform<S>({cin, cout, k, k},
                                           int64_t(cin) * k * k, rng));
  d.b = ps.param(name + ".b", Tensor<S>::zeros({cout}));
  d.stride = stride;
  d.pad = pad;
  d.out_pad = out_pad;
  return d;
}

// Per-channel batch statistics over (N,H,W); biased variance. Running
// stats follow new = momentum * old + (1 - momentum) * batch and are
// used verbatim in eval mode.
template <typename S>
struct BatchNorm {
  Tensor<S> gamma, beta;
  Tensor<S> run_mean, run_var;
  S eps = S(1e-5);
  S momentum = S(0.99);

  Tensor<S> forward(const Tensor<S>& x, bool train,
                    bool update_stats) const {
    const Shape& xs = x.shape();
    if (train) {
      S inv_count = S(1) / S(int64_t(xs[0]) * xs[2] * xs[3]);
      Tensor<S> m = scale(sum_per_channel(x), inv_count);
      Tensor<S> xm = sub(x, broadcast_channel(m, xs));
      Tensor<S> var = scale(sum_per_channel(mul(xm, xm)), inv_count);
      if (update_stats) {
        auto rm = run_mean.values();
        auto rv = run_var.values();
        auto bm = m.values();
        auto bv = var.values();
        for (size_t i = 0; i < rm.size(); ++i) {
          rm[i] = momentum * rm[i] + (S(1) - momentum) * bm[i];
          rv[i] = momentum * rv[i] + (S(1) - momentum) * bv[i];
        }
      }
      Tensor<S> inv = reciprocal(sqrt(add_scalar(var, eps)));
      Tensor<S> norm = mul(xm, broadcast_channel(inv, xs));
      return add(mul(norm, broadcast_channel(gamma, xs)),
                 broadcast_channel(beta, xs));
    }
    Tensor<S> xm = sub(x, broadcast_channel(run_mean, xs));
    Tensor<S> inv = reciprocal(sqrt(add_scalar(run_var, eps)));
    Tensor<S> norm = mul(xm, broadcast_channel(inv, xs));
    return add(mul(norm, broadcast_channel(gamma, xs)),
               broadcast_channel(beta, xs));
  }
};

template <typename S>
BatchNorm<S> make_bn(ParamStore<S>& ps, const std::string& name, int c) {
  BatchNorm<S> bn;
  bn.gamma = ps.param(name + ".gamma", Tensor<S>::full({c}, S(1)));
  bn.beta = ps.param(name + ".beta", Tensor<S>::zeros({c}));
  bn.run_mean = ps.buffer(name + ".run_mean", Tensor<S>::zeros({c}));
  bn.run_var = ps.buffer(name + ".run_var", Tensor<S>::full({c}, S(1)));
  return bn;
}

// Per-sample statistics over (C,H,W); per-channel affine.
template <typename S>
struct LayerNorm {
  Tensor<S> gamma, beta;
  S eps = S(1e-5);

  Tensor<S> forward(const Tensor<S>& x) const {
    const Shape& xs = x.shape();
    S inv_count = S(1) / S(int64_t(xs[1]) * xs[2] * xs[3]);
    Tensor<S> m = scale(sum_per_sample(x), inv_count);
    Tensor<S> xm = sub(x, broadcast_sample(m, xs));
    Tensor<S> var = scale(sum_per_sample(mul(xm, xm)), inv_count);
    Tensor<S> inv = reciprocal(sqrt(add_scalar(var, eps)));
    Tensor<S> norm = mul(xm, broadcast_sample(inv, xs));
    return add(mul(norm, broadcast_channel(gamma, xs)),
               broadcast_channel(beta, xs));
  }
};

template <typename S>
LayerNorm<S> make_ln(ParamStore<S>& ps, const std::string& name, int c) {
  LayerNorm<S> ln;
  ln.gamma = ps.param(name + ".gamma", Tensor<S>::full({c}, S(1)));
  ln.beta = ps.param(name + ".beta", Tensor<S>::zeros({c}));
  return ln;
}

template <typename S>
struct FcLayer {
  Tensor<S> w, b;
  Tensor<S> forward(const Tensor<S>& x) const {
    return fully_connected(x, w, b);
  }
};

template <typename S>
FcLayer<S> make_fc(ParamStore<S>& ps, const std::string& name, int din,
                   int dout, Rng& rng) {
  FcLayer<S> f;
  f.w = ps.param(name + ".w", he_uniform<S>({dout, din}, din, rng));
  f.b = ps.param(name + ".b", Tensor<S>::zeros({dout}));
  return f;
}

struct ModelConfig {
  int size = 32;    // square resolution, power of two, >= 16
  int base_c = 16;  // level-1 feature width; doubles per level
  int n_attrs = 4;
  int steps = 4;               // attentive levels, counted from the top
  bool residual_masks = true;  // mask = upsampled previous + delta
  bool single_mask = false;    // one shared mask instead of per-attribute
  bool clamp_masks = true;     // clamp per-attribute and merged masks to [0,1]
  bool mask_head_zero_init = true;  // start from the identity edit
  uint64_t seed = 1;

  int levels() const { return 4; }
  int ch(int k) const { return k == 0 ? 3 : base_c << (k - 1); }
  int spatial(int k) const { return size >> k; }
  void validate() const {
    if (size < 16 || (size & (size - 1)))
      throw ShapeError(cat("config: size ", size,
                           " must be a power of two >= 16"));
    if (base_c < 4 || base_c % 2)
      throw ShapeError(cat("config: base_c ", base_c, " must be even >= 4"));
    if (n_attrs < 1 || n_attrs > 8)
      throw ShapeError(cat("config: n_attrs ", n_attrs, " out of [1,8]"));
    if (steps < 1 || steps > 4)
      throw ShapeError(cat("config: steps ", steps, " out of [1,4]"));
  }
};

template <typename S>
struct GeneratorOut {
  Tensor<S> image;                     // [N,3,size,size]
  std::array<Tensor<S>, 5> f_a;        // encoder features, index = level
  std::array<Tensor<S>, 4> edited;     // e_k per attentive level
  std::array<Tensor<S>, 4> masks;      // per-attribute masks [N,nm,h,w]
  std::array<Tensor<S>, 4> merged;     // merged masks [N,1,h,w]
  std::array<Tensor<S>, 4> deltas;     // raw mask-head outputs [N,nm,h,w]

  bool has_mask(int k) const { return masks[k].defined(); }
};

template <typename S>
class GeneratorNet {
 public:
  explicit GeneratorNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
    int n = cfg.n_attrs;
    for (int k = 1; k <= 4; ++k) {
      enc_conv_[k - 1] = make_conv(store_, cat("enc", k), cfg_.ch(k - 1),
                                   cfg_.ch(k), 4, 2, 1, rng);
      enc_bn_[k - 1] = make_bn(store_, cat("enc", k, ".bn"), cfg_.ch(k));
    }
    for (int k = 3; k >= 0; --k) {
      if (attentive(k)) {
        int c1 = k == 0 ? cfg_.base_c / 2 : cfg_.ch(k);
        int c2 = k == 0 ? 3 : cfg_.ch(k);
        auto nm = cat("edit", k);
        ge_d1_[k] = make_deconv(store_, nm + ".up1", cfg_.ch(k + 1) + n, c1,
                                3, 1, 1, 0, rng);
        ge_bn1_[k] = make_bn(store_, nm + ".up1.bn", c1);
        ge_d2_[k] = make_deconv(store_, nm + ".up2", c1, c2, 3, 2, 1, 1, rng);
        if (k > 0) ge_bn2_[k] = make_bn(store_, nm + ".up2.bn", c2);
        build_mask_head(k, rng);
      } else {
        int cout = k == 0 ? 3 : cfg_.ch(k);
        plain_[k] = make_deconv(store_, cat("plain", k), cfg_.ch(k + 1) + n,
                                cout, 3, 2, 1, 1, rng);
        if (k > 0) plain_bn_[k] = make_bn(store_, cat("plain", k, ".bn"), cout);
      }
    }
  }

  bool attentive(int k) const { return k >= 4 - cfg_.steps; }
  int mask_channels() const { return cfg_.single_mask ? 1 : cfg_.n_attrs; }
  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& store() { return store_; }
  const ParamStore<S>& store() const { return store_; }

  // x in [-1,1], a/b are {0,1} attribute rows [N,n].
  GeneratorOut<S> forward(const Tensor<S>& x, const Tensor<S>& a,
                          const Tensor<S>& b, bool train = true,
                          bool update_stats = false) const {
    if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.size ||
        x.dim(3) != cfg_.size)
      throw ShapeError(cat("generator: input ", shape_str(x.shape()),
                           " expected [N,3,", cfg_.size, ",", cfg_.size, "]"));
    int n = x.dim(0);
    Tensor<S> d = sub(b, a);
    GeneratorOut<S> out;
    out.f_a[0] = x;
    for (int k = 1; k <= 4; ++k)
      out.f_a[k] = relu(enc_bn_[k - 1].forward(
          enc_conv_[k - 1].forward(out.f_a[k - 1]), train, update_stats));

    Tensor<S> fb = out.f_a[4];
    // The level-4 mask is identically zero; level 3 consumes it at its own
    // resolution, every later level upsamples the previous one first.
    Tensor<S> m_prev = Tensor<S>::zeros(
        {n, mask_channels(), cfg_.spatial(3), cfg_.spatial(3)});
    for (int k = 3; k >= 0; --k) {
      int h = cfg_.spatial(k);
      Tensor<S> din = concat_channels<S>(
          {fb, broadcast_tile(d, cfg_.spatial(k + 1), cfg_.spatial(k + 1))});
      if (attentive(k)) {
        Tensor<S> e = ge_bn1_[k].forward(ge_d1_[k].forward(din), train,
                                         update_stats);
        e = relu(e);
        e = ge_d2_[k].forward(e);
        e = k == 0 ? tanh(e)
                   : relu(ge_bn2_[k].forward(e, train, update_stats));
        Tensor<S> m_up = k == 3 ? m_prev : upsample_nearest2x(m_prev);
        Tensor<S> delta = mask_head(
            k,
            concat_channels<S>(
                {out.f_a[k], e, m_up, broadcast_tile(d, h, h)}),
            train, update_stats);
        Tensor<S> m_attr =
            cfg_.residual_masks ? add(m_up, delta) : delta;
        if (cfg_.clamp_masks) m_attr = clamp01(m_attr);
        Tensor<S> merged;
        if (cfg_.single_mask) {
          merged = m_attr;
        } else {
          Tensor<S> sel = abs(d);
          merged = sum_channels(mul(m_attr, broadcast_tile(sel, h, h)));
          if (cfg_.clamp_masks) merged = clamp01(merged);
        }
        int ch = k == 0 ? 3 : cfg_.ch(k);
        Tensor<S> mfull = expand_channels(merged, ch);
        Tensor<S> ones = Tensor<S>::full(mfull.shape(), S(1));
        fb = add(mul(mfull, e), mul(sub(ones, mfull), out.f_a[k]));
        out.edited[k] = e;
        out.masks[k] = m_attr;
        out.merged[k] = merged;
        out.deltas[k] = delta;
        m_prev = m_attr;
      } else {
        Tensor<S> y = plain_[k].forward(din);
        fb = k == 0 ? tanh(y)
                    : relu(plain_bn_[k].forward(y, train, update_stats));
      }
    }
    out.image = fb;
    return out;
  }

  // Per-attribute view of the level-k masks; the shared-mask variant
  // exposes its single channel replicated per attribute.
  Tensor<S> masks_per_attr(const GeneratorOut<S>& o, int k) const {
    if (!o.masks[k].defined())
      throw ShapeError(cat("masks_per_attr: level ", k, " has no mask"));
    if (!cfg_.single_mask) return o.masks[k];
    return expand_channels(o.masks[k], cfg_.n_attrs);
  }

 private:
  void build_mask_head(int k, Rng& rng) {
    int n = cfg_.n_attrs;
    int fa_c = cfg_.ch(k);
    int e_c = k == 0 ? 3 : cfg_.ch(k);
    int in_c = fa_c + e_c + mask_channels() + n;
    int bw = k == 0 ? cfg_.base_c / 2 : cfg_.ch(k);
    auto nm = cat("mask", k);
    gm_b1_[k] = make_conv(store_, nm + ".b1", in_c, bw, 1, 1, 0, rng);
    gm_b1n_[k] = make_bn(store_, nm + ".b1.bn", bw);
    gm_b2_[k] = make_conv(store_, nm + ".b2", in_c, bw, 3, 1, 1, rng);
    gm_b2n_[k] = make_bn(store_, nm + ".b2.bn", bw);
    gm_b3a_[k] = make_conv(store_, nm + ".b3a", in_c, bw, 3, 1, 1, rng);
    gm_b3an_[k] = make_bn(store_, nm + ".b3a.bn", bw);
    gm_b3b_[k] = make_conv(store_, nm + ".b3b", bw, bw, 3, 1, 1, rng);
    gm_b3bn_[k] = make_bn(store_, nm + ".b3b.bn", bw);
    gm_b4a_[k] = make_conv(store_, nm + ".b4a", in_c, bw, 3, 1, 1, rng);
    gm_b4an_[k] = make_bn(store_, nm + ".b4a.bn", bw);
    gm_b4b_[k] = make_conv(store_, nm + ".b4b", bw, bw, 3, 1, 1, rng);
    gm_b4bn_[k] = make_bn(store_, nm + ".b4b.bn", bw);
    gm_b4c_[k] = make_conv(store_, nm + ".b4c", bw, bw, 3, 1, 1, rng);
    gm_b4cn_[k] = make_bn(store_, nm + ".b4c.bn", bw);
    int cd = cfg_.base_c << k;
    gm_down_[k] = make_conv(store_, nm + ".down", 4 * bw, cd, 4, 2, 1, rng);
    gm_downn_[k] = make_bn(store_, nm + ".down.bn", cd);
    gm_out_[k] = make_deconv(store_, nm + ".out", cd, mask_channels(), 4, 2,
                             1, 0, rng, cfg_.mask_head_zero_init);
  }

  Tensor<S> mask_head(int k, const Tensor<S>& in, bool train,
                      bool update_stats) const {
    auto blk = [&](const ConvLayer<S>& c, const BatchNorm<S>& bn,
                   const Tensor<S>& x) {
      return relu(bn.forward(c.forward(x), train, update_stats));
    };
    Tensor<S> p1 = blk(gm_b1_[k], gm_b1n_[k], in);
    Tensor<S> p2 = blk(gm_b2_[k], gm_b2n_[k], in);
    Tensor<S> p3 = blk(gm_b3b_[k], gm_b3bn_[k],
                       blk(gm_b3a_[k], gm_b3an_[k], in));
    Tensor<S> p4 = blk(gm_b4c_[k], gm_b4cn_[k],
                       blk(gm_b4b_[k], gm_b4bn_[k],
                           blk(gm_b4a_[k], gm_b4an_[k], in)));
    Tensor<S> y = blk(gm_down_[k], gm_downn_[k],
                      concat_channels<S>({p1, p2, p3, p4}));
    return gm_out_[k].forward(y);
  }

  ModelConfig cfg_;
  ParamStore<S> store_;
  std::array<ConvLayer<S>, 4> enc_conv_;
  std::array<BatchNorm<S>, 4> enc_bn_;
  std::array<DeconvLayer<S>, 4> ge_d1_, ge_d2_;
  std::array<BatchNorm<S>, 4> ge_bn1_, ge_bn2_;
  std::array<ConvLayer<S>, 4> gm_b1_, gm_b2_, gm_b3a_, gm_b3b_, gm_b4a_,
      gm_b4b_, gm_b4c_, gm_down_;
  std::array<BatchNorm<S>, 4> gm_b1n_, gm_b2n_, gm_b3an_, gm_b3bn_, gm_b4an_,
      gm_b4bn_, gm_b4cn_, gm_downn_;
  std::array<DeconvLayer<S>, 4> gm_out_;
  std::array<DeconvLayer<S>, 4> plain_;
  std::array<BatchNorm<S>, 4> plain_bn_;
};

// Shared conv trunk with two heads: per-attribute probabilities
// (classifier) and an unbounded realism score (critic).
template <typename S>
class CriticNet {
 public:
  explicit CriticNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 2);
    stages_ = 0;
    for (int s = cfg.size; s > 1; s /= 2) ++stages_;
    int cin = 3;
    for (int j = 1; j <= stages_; ++j) {
      int cout = cfg_.base_c << (j - 1);
      trunk_.push_back(make_conv(store_, cat("trunk", j), cin, cout, 4, 2, 1,
                                 rng));
      ln_.push_back(make_ln(store_, cat("trunk", j, ".ln"), cout));
      cin = cout;
    }
    hidden_ = cin;
    c_fc1_ = make_fc(store_, "headC.fc1", hidden_, hidden_, rng);
    c_fc2_ = make_fc(store_, "headC.fc2", hidden_, cfg_.n_attrs, rng);
    d_fc1_ = make_fc(store_, "headD.fc1", hidden_, hidden_, rng);
    d_fc2_ = make_fc(store_, "headD.fc2", hidden_, 1, rng);
  }

  struct Out {
    Tensor<S> probs;  // [N,n] in (0,1)
    Tensor<S> score;  // [N,1] unbounded
  };

  Out forward(const Tensor<S>& x) const {
    Tensor<S> h = x;
    for (int j = 0; j < stages_; ++j)
      h = leaky_relu(ln_[j].forward(trunk_[j].forward(h)), S(0.2));
    h = flatten2(h);
    Tensor<S> pc = leaky_relu(c_fc1_.forward(h), S(0.2));
    Tensor<S> pd = leaky_relu(d_fc1_.forward(h), S(0.2));
    return {sigmoid(c_fc2_.forward(pc)), d_fc2_.forward(pd)};
  }

  const ModelConfig& config() const { return cfg_; }
  int hidden() const { return hidden_; }
  ParamStore<S>& store() { return store_; }
  const ParamStore<S>& store() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore<S> store_;
  int stages_ = 0, hidden_ = 0;
  std::vector<ConvLayer<S>> trunk_;
  std::vector<LayerNorm<S>> ln_;
  FcLayer<S> c_fc1_, c_fc2_, d_fc1_, d_fc2_;
};

// Standalone attribute predictor: four double-conv blocks with maxpool,
// fixed widths; trained separately and then frozen for evaluation.
template <typename S>
class PredictorNet {
 public:
  explicit PredictorNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 3);
    const int widths[4] = {16, 32, 64, 128};
    int cin = 3;
    for (int b = 0; b < 4; ++b) {
      conv1_[b] = make_conv(store_, cat("block", b, ".c1"), cin, widths[b], 3,
                            1, 1, rng);
      bn1_[b] = make_bn(store_, cat("block", b, ".c1.bn"), widths[b]);
      conv2_[b] = make_conv(store_, cat("block", b, ".c2"), widths[b],
                            widths[b], 3, 1, 1, rng);
      bn2_[b] = make_bn(store_, cat("block", b, ".c2.bn"), widths[b]);
      cin = widths[b];
    }
    int spatial = cfg_.size / 16;
    flat_ = 128 * spatial * spatial;
    fc1_ = make_fc(store_, "fc1", flat_, 128, rng);
    fc2_ = make_fc(store_, "fc2", 128, cfg_.n_attrs, rng);
  }

  Tensor<S> forward(const Tensor<S>& x, bool train = false,
                    bool update_stats = false) const {
    Tensor<S> h = x;
    for (int b = 0; b < 4; ++b) {
      h = relu(bn1_[b].forward(conv1_[b].forward(h), train, update_stats));
      h = relu(bn2_[b].forward(conv2_[b].forward(h), train, update_stats));
      h = maxpool(h, 2, 2);
    }
    h = relu(fc1_.forward(flatten2(h)));
    return sigmoid(fc2_.forward(h));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& store() { return store_; }
  const ParamStore<S>& store() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore<S> store_;
  std::array<ConvLayer<S>, 4> conv1_, conv2_;
  std::array<BatchNorm<S>, 4> bn1_, bn2_;
  FcLayer<S> fc1_, fc2_;
  int flat_ = 0;
};

}  // namespace attredit
