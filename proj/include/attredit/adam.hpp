#pragma once

// Adam with bias correction, operating in place on leaf tensors. Moment
// buffers are exposed for checkpointing so optimizer state survives a
// training restart bit-for-bit.

#include <cmath>
#include <vector>

#include "attredit/tensor.hpp"

namespace attredit {

template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, S lr, S beta1 = S(0.5),
       S beta2 = S(0.999), S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2),
        eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(size_t(params_[i].numel()), S(0));
      v_[i].assign(size_t(params_[i].numel()), S(0));
    }
  }

  // Applies one update from the accumulated .grad of each parameter.
  // Parameters whose grad is undefined are left untouched.
  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(b1_, S(t_));
    const S bc2 = S(1) - std::pow(b2_, S(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<S> g = params_[i].grad();
      if (!g.defined()) continue;
      auto gv = g.values();
      auto pv = params_[i].values();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < m.size(); ++j) {
        m[j] = b1_ * m[j] + (S(1) - b1_) * gv[j];
        v[j] = b2_ * v[j] + (S(1) - b2_) * gv[j] * gv[j];
        S mh = m[j] / bc1;
        S vh = v[j] / bc2;
        pv[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::vector<std::vector<S>>& moments_m() { return m_; }
  std::vector<std::vector<S>>& moments_v() { return v_; }
  const std::vector<Tensor<S>>& params() const { return params_; }

 private:
  std::vector<Tensor<S>> params_;
  S lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_;
};

}  // namespace attredit
