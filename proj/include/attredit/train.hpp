#pragma once

// Alternating optimization: n_critic critic/classifier updates per
// generator update, every loss component logged per step, periodic
// checkpoints with a state sidecar that makes resumption bit-exact.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "attredit/adam.hpp"
#include "attredit/checkpoint.hpp"
#include "attredit/losses.hpp"
#include "attredit/nets.hpp"
#include "attredit/synth.hpp"

namespace attredit {

struct TrainConfig {
  int size = 32, base_c = 16, n_attrs = 4;
  int batch_size = 32, n_critic = 5;
  int64_t total_g_steps = 20000;
  int64_t ckpt_every = 5000;  // in generator steps; 0 = only final
  double lr = 2e-4, beta1 = 0.5, beta2 = 0.999, adam_eps = 1e-8;
  LossWeights w;
  uint64_t seed = 1;
  int steps = 4;
  bool residual_masks = true, single_mask = false, clamp_masks = true;
  bool mask_head_zero_init = true;
  bool overlap_gated = false;
  // Descend the logged generator-side adversarial value verbatim instead
  // of the realism direction (kept for comparison; see README).
  bool adv_g_literal = false;
  std::string out_dir = ".";

  ModelConfig model() const {
    ModelConfig m;
    m.size = size;
    m.base_c = base_c;
    m.n_attrs = n_attrs;
    m.steps = steps;
    m.residual_masks = residual_masks;
    m.single_mask = single_mask;
    m.clamp_masks = clamp_masks;
    m.mask_head_zero_init = mask_head_zero_init;
    m.seed = seed;
    return m;
  }
};

// Independent flips with probability 0.5 per bit; the all-equal draw is
// rejected and redrawn so every target differs from its source.
template <typename S>
Tensor<S> sample_targets(const Tensor<S>& a, Rng& rng) {
  if (a.ndim() != 2)
    throw ShapeError(cat("sample_targets: ", shape_str(a.shape())));
  int n = a.dim(0), d = a.dim(1);
  std::vector<S> b(size_t(n) * d);
  auto av = a.values();
  for (int i = 0; i < n; ++i) {
    bool any = false;
    std::vector<uint8_t> flips(d);
    while (!any) {
      for (int j = 0; j < d; ++j) {
        flips[j] = rng.bernoulli(0.5) ? 1 : 0;
        if (flips[j]) any = true;
      }
    }
    for (int j = 0; j < d; ++j) {
      S aj = av[size_t(i) * d + j];
      b[size_t(i) * d + j] = flips[j] ? S(1) - aj : aj;
    }
  }
  return Tensor<S>::from_vec({n, d}, std::move(b));
}

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Dataset& train_data);

  // Continue from a parameter file + state sidecar written by this class.
  void resume(const std::string& ckpt_path);

  LossReport step_dc();
  LossReport step_g();

  // Runs cycles of [n_critic x dc, 1 x g] until total_g_steps, appending
  // to the metrics log and checkpointing on cadence. Returns the final
  // checkpoint path.
  std::string run();

  void save_checkpoint(const std::string& path) const;

  GeneratorNet<float>& generator() { return *gen_; }
  CriticNet<float>& critic() { return *critic_; }
  Adam<float>& opt_g() { return *adam_g_; }
  Adam<float>& opt_dc() { return *adam_dc_; }
  uint64_t g_steps() const { return state_.g_step; }
  uint64_t dc_steps() const { return state_.dc_step; }
  const TrainConfig& config() const { return cfg_; }

  // Mean critic gradient norm on fresh interpolates, for diagnostics.
  double interpolate_grad_norm();

 private:
  struct Batch {
    Tensor<float> x, a;
  };
  Batch next_batch();
  void start_epoch();
  void append_metrics(const LossReport& r, const char* phase);
  void check_component(const Tensor<float>& t, const char* name,
                       const char* phase) const;
  TrainState capture_state() const;
  void apply_state(const TrainState& ts);
  std::vector<std::string> param_names() const;

  TrainConfig cfg_;
  const Dataset& data_;
  std::unique_ptr<GeneratorNet<float>> gen_;
  std::unique_ptr<CriticNet<float>> critic_;
  std::unique_ptr<Adam<float>> adam_g_, adam_dc_;
  std::vector<std::pair<int, int>> pairs_;
  Rng data_rng_, target_rng_, mix_rng_;
  uint64_t epoch_start_state_ = 0;
  std::vector<int> order_;
  TrainState state_;
  bool metrics_has_header_ = false;
};

struct PredictorTrainConfig {
  int size = 32, n_attrs = 4;
  int batch_size = 64, epochs = 2;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  uint64_t seed = 1;
};

struct PredictorResult {
  std::vector<double> test_accuracy;  // per attribute
  double mean_accuracy = 0;
};

// Trains the evaluation predictor with BCE and measures held-out
// per-attribute accuracy at threshold 0.5.
PredictorResult train_predictor(const PredictorTrainConfig& cfg,
                                const Dataset& train, const Dataset& test,
                                PredictorNet<float>& net);

// Per-attribute accuracy of a trained predictor on a dataset.
std::vector<double> predictor_accuracy(const PredictorNet<float>& net,
                                       const Dataset& ds);

}  // namespace attredit
