#pragma once

// Loss terms for the attentive editor and its critic, plus the weighted
// totals that the trainer logs and descends.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "attredit/nets.hpp"
#include "attredit/ops.hpp"
#include "attredit/rng.hpp"
#include "attredit/tensor.hpp"

namespace attredit {

struct LossWeights {
  double l_att = 20.0;  // attribute classification on edited images
  double l_adv = 1.0;   // adversarial term, generator side
  double l_spa = 0.05;  // mask sparsity
  double l_ovl = 1.0;   // mask overlap for disjoint attribute pairs
  double l_cls = 1.0;   // attribute classification on real images
  double l_gap = 1.0;   // adversarial term, critic side
  double l_lp = 10.0;   // gradient penalty
};

// One logged row. The scalar fields appear in the metrics log in exactly
// this order.
struct LossReport {
  double l_att = 0, l_c = 0, l_adv_g = 0, l_adv_d = 0;
  double lipschitz_penalty = 0, l_spa = 0, l_ovl = 0;
  double total_g = 0, total_dc = 0;

  static const char* tsv_header() {
    return "step\tphase\tl_att\tl_C\tl_adv_g\tl_adv_d\tlipschitz_penalty\t"
           "l_spa\tl_ovl\ttotal_g\ttotal_dc";
  }

  void fill_totals(const LossWeights& w) {
    total_g = w.l_att * l_att + w.l_adv * l_adv_g + w.l_spa * l_spa +
              w.l_ovl * l_ovl;
    total_dc = w.l_cls * l_c - w.l_gap * l_adv_d + w.l_lp * lipschitz_penalty;
  }
};

// Mean over samples of the summed per-attribute binary cross entropy.
// Probabilities are clamped away from {0,1} so the logs stay finite.
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& probs, const Tensor<S>& targets) {
  if (probs.shape() != targets.shape() || probs.ndim() != 2)
    throw ShapeError(cat("bce_loss: probs ", shape_str(probs.shape()),
                         " vs targets ", shape_str(targets.shape())));
  int n = probs.dim(0);
  Tensor<S> p = clamp(probs, S(1e-7), S(1) - S(1e-7));
  Tensor<S> ones = Tensor<S>::full(p.shape(), S(1));
  Tensor<S> per =
      add(mul(targets, log(p)), mul(sub(ones, targets), log(sub(ones, p))));
  return scale(sum(per), S(-1) / S(n));
}

// E[D(real)] - E[D(fake)]: the quantity the critic drives up. The critic
// loss uses its negative; the logged generator-side value is its negative
// as well.
template <typename S>
Tensor<S> score_gap(const Tensor<S>& score_real, const Tensor<S>& score_fake) {
  return sub(mean(score_real), mean(score_fake));
}

// One-sided penalty keeping the critic's gradient norm at most 1 on random
// interpolates between real and fake batches. Built with a differentiable
// gradient query so the penalty itself can be backpropagated into the
// critic's parameters.
template <typename Net, typename S>
Tensor<S> lipschitz_penalty(const Net& critic, const Tensor<S>& x_real,
                            const Tensor<S>& x_fake, Rng& rng) {
  if (x_real.shape() != x_fake.shape())
    throw ShapeError(cat("lipschitz_penalty: ", shape_str(x_real.shape()),
                         " vs ", shape_str(x_fake.shape())));
  int n = x_real.dim(0);
  std::vector<S> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = S(rng.uniform());
  Tensor<S> eps = Tensor<S>::from_vec({n}, ev);
  Tensor<S> be = broadcast_sample(eps, x_real.shape());
  Tensor<S> ones = Tensor<S>::full(x_real.shape(), S(1));
  Tensor<S> mix =
      add(mul(be, x_real.detach()), mul(sub(ones, be), x_fake.detach()));
  mix.set_requires_grad(true);
  Tensor<S> s = sum(critic.forward(mix).score);
  Tensor<S> g = grad(s, {mix}, /*create_graph=*/true)[0];
  Tensor<S> sq = sum_per_sample(mul(g, g));
  Tensor<S> norm = sqrt(add_scalar(sq, S(1e-12)));
  Tensor<S> hinge = relu(add_scalar(norm, S(-1)));
  return mean(mul(hinge, hinge));
}

// Sum over mask levels of the mean absolute merged-mask value.
template <typename S>
Tensor<S> sparsity_loss(const GeneratorOut<S>& out) {
  Tensor<S> acc;
  for (int k = 0; k < 4; ++k) {
    if (!out.merged[k].defined()) continue;
    Tensor<S> term = mean(abs(out.merged[k]));
    acc = acc.defined() ? add(acc, term) : term;
  }
  if (!acc.defined()) throw AutogradError("sparsity_loss: no masks present");
  return acc;
}

// Sum over disjoint attribute pairs of the mean elementwise product of
// their finest per-attribute masks. With `gated`, each pair contributes
// only on samples where both attributes actually flip.
template <typename S>
Tensor<S> overlap_loss(const Tensor<S>& masks,
                       const std::vector<std::pair<int, int>>& pairs,
                       const Tensor<S>& d = {}, bool gated = false) {
  if (masks.ndim() != 4)
    throw ShapeError(cat("overlap_loss: masks ", shape_str(masks.shape())));
  Tensor<S> acc;
  for (auto [i, j] : pairs) {
    Tensor<S> mi = slice_channels(masks, i, 1);
    Tensor<S> mj = slice_channels(masks, j, 1);
    Tensor<S> prod = mul(mi, mj);
    if (gated) {
      Tensor<S> gi = slice_cols(abs(d), i);
      Tensor<S> gj = slice_cols(abs(d), j);
      prod = mul(prod, broadcast_sample(mul(gi, gj), prod.shape()));
    }
    Tensor<S> term = mean(prod);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc.defined() ? acc : Tensor<S>::scalar(S(0));
}

// Finest level that carries a mask (the editor builds them top-down, so
// this is the last one it produced).
template <typename S>
int finest_mask_level(const GeneratorOut<S>& out) {
  for (int k = 0; k < 4; ++k)
    if (out.masks[k].defined()) return k;
  throw AutogradError("finest_mask_level: no masks present");
}

}  // namespace attredit
