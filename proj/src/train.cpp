#include "attredit/train.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "attredit/model_io.hpp"

namespace attredit {
namespace {

std::string step_tag(uint64_t g_step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08" PRIu64, g_step);
  return buf;
}

void append_field(std::string& row, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "\t%.9g", v);
  row += buf;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const Dataset& train_data)
    : cfg_(cfg), data_(train_data) {
  if (data_.size != cfg_.size || data_.n != cfg_.n_attrs)
    throw FormatError(cat("trainer: dataset is size=", data_.size,
                          " n=", data_.n, ", config wants size=", cfg_.size,
                          " n=", cfg_.n_attrs));
  if (data_.count() < cfg_.batch_size)
    throw FormatError(cat("trainer: ", data_.count(),
                          " samples cannot fill a batch of ",
                          cfg_.batch_size));
  ModelConfig mc = cfg_.model();
  gen_ = std::make_unique<GeneratorNet<float>>(mc);
  critic_ = std::make_unique<CriticNet<float>>(mc);
  adam_g_ = std::make_unique<Adam<float>>(gen_->store().params(),
                                          float(cfg_.lr), float(cfg_.beta1),
                                          float(cfg_.beta2),
                                          float(cfg_.adam_eps));
  adam_dc_ = std::make_unique<Adam<float>>(critic_->store().params(),
                                           float(cfg_.lr), float(cfg_.beta1),
                                           float(cfg_.beta2),
                                           float(cfg_.adam_eps));
  pairs_ = disjoint_pairs(cfg_.n_attrs);
  Rng master(cfg_.seed);
  data_rng_ = master.fork(11);
  target_rng_ = master.fork(12);
  mix_rng_ = master.fork(13);
  start_epoch();
  state_.cursor = 0;
}

void Trainer::start_epoch() {
  epoch_start_state_ = data_rng_.state();
  order_.resize(data_.count());
  std::iota(order_.begin(), order_.end(), 0);
  data_rng_.shuffle(order_);
  state_.cursor = 0;
}

Trainer::Batch Trainer::next_batch() {
  if (state_.cursor + uint64_t(cfg_.batch_size) > order_.size()) {
    ++state_.epoch;
    start_epoch();
  }
  std::vector<int> idx(order_.begin() + ptrdiff_t(state_.cursor),
                       order_.begin() + ptrdiff_t(state_.cursor) +
                           cfg_.batch_size);
  state_.cursor += uint64_t(cfg_.batch_size);
  return {batch_images<float>(data_, idx), batch_attrs<float>(data_, idx)};
}

void Trainer::check_component(const Tensor<float>& t, const char* name,
                              const char* phase) const {
  for (float v : t.values())
    if (!std::isfinite(v))
      throw NumericError(cat(name, " is non-finite at ", phase, " step ",
                             state_.dc_step + state_.g_step + 1));
}

LossReport Trainer::step_dc() {
  gen_->store().zero_grads();
  critic_->store().zero_grads();
  Batch batch = next_batch();
  Tensor<float> b = sample_targets(batch.a, target_rng_);

  Tensor<float> fake;
  GeneratorOut<float> gout;
  {
    NoGradGuard ng;
    gout = gen_->forward(batch.x, batch.a, b, /*train=*/true,
                         /*update_stats=*/false);
    fake = gout.image;
  }
  auto real_out = critic_->forward(batch.x);
  auto fake_out = critic_->forward(fake);
  Tensor<float> l_c = bce_loss(real_out.probs, batch.a);
  Tensor<float> gap = score_gap(real_out.score, fake_out.score);
  Tensor<float> pen = lipschitz_penalty(*critic_, batch.x, fake, mix_rng_);
  check_component(l_c, "l_C", "dc");
  check_component(gap, "l_adv_d", "dc");
  check_component(pen, "lipschitz_penalty", "dc");

  Tensor<float> obj =
      add(add(scale(l_c, float(cfg_.w.l_cls)), scale(gap, -float(cfg_.w.l_gap))),
          scale(pen, float(cfg_.w.l_lp)));
  backward(obj);
  adam_dc_->step();
  critic_->store().zero_grads();
  ++state_.dc_step;

  LossReport r;
  r.l_c = l_c.item();
  r.l_adv_d = gap.item();
  r.l_adv_g = -r.l_adv_d;
  r.lipschitz_penalty = pen.item();
  {
    NoGradGuard ng;
    r.l_att = bce_loss(fake_out.probs, b).item();
    r.l_spa = sparsity_loss(gout).item();
    Tensor<float> d = sub(b, batch.a);
    int fk = finest_mask_level(gout);
    r.l_ovl = overlap_loss(gen_->masks_per_attr(gout, fk), pairs_, d,
                           cfg_.overlap_gated)
                  .item();
  }
  r.fill_totals(cfg_.w);
  return r;
}

LossReport Trainer::step_g() {
  gen_->store().zero_grads();
  critic_->store().zero_grads();
  Batch batch = next_batch();
  Tensor<float> b = sample_targets(batch.a, target_rng_);
  Tensor<float> d = sub(b, batch.a);

  GeneratorOut<float> out = gen_->forward(batch.x, batch.a, b, /*train=*/true,
                                          /*update_stats=*/true);
  auto fake_out = critic_->forward(out.image);
  Tensor<float> l_att = bce_loss(fake_out.probs, b);
  Tensor<float> spa = sparsity_loss(out);
  int fk = finest_mask_level(out);
  Tensor<float> ovl = overlap_loss(gen_->masks_per_attr(out, fk), pairs_, d,
                                   cfg_.overlap_gated);
  Tensor<float> fake_mean = mean(fake_out.score);

  double real_mean;
  {
    NoGradGuard ng;
    real_mean = mean(critic_->forward(batch.x).score).item();
  }
  check_component(l_att, "l_att", "g");
  check_component(spa, "l_spa", "g");
  check_component(ovl, "l_ovl", "g");
  check_component(fake_mean, "l_adv_g", "g");

  // The logged adversarial value follows the fixed sign convention
  // l_adv_g = -E[D(real)] + E[D(fake)]. The descended surrogate drives
  // fake scores up (E[D(real)] is constant for these parameters); the
  // literal toggle descends the logged value's sign instead.
  Tensor<float> adv_term = cfg_.adv_g_literal
                               ? fake_mean
                               : scale(fake_mean, -1.0f);
  Tensor<float> obj = add(
      add(scale(l_att, float(cfg_.w.l_att)), scale(adv_term, float(cfg_.w.l_adv))),
      add(scale(spa, float(cfg_.w.l_spa)), scale(ovl, float(cfg_.w.l_ovl))));
  backward(obj);
  adam_g_->step();
  gen_->store().zero_grads();
  critic_->store().zero_grads();
  ++state_.g_step;

  LossReport r;
  r.l_att = l_att.item();
  r.l_spa = spa.item();
  r.l_ovl = ovl.item();
  r.l_adv_g = -real_mean + fake_mean.item();
  r.l_adv_d = -r.l_adv_g;
  {
    NoGradGuard ng;
    r.l_c = bce_loss(critic_->forward(batch.x).probs, batch.a).item();
  }
  r.lipschitz_penalty =
      lipschitz_penalty(*critic_, batch.x, out.image.detach(), mix_rng_)
          .item();
  r.fill_totals(cfg_.w);
  return r;
}

void Trainer::append_metrics(const LossReport& r, const char* phase) {
  std::string path = cfg_.out_dir + "/metrics.tsv";
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError(cat("cannot append to ", path));
  if (!metrics_has_header_) {
    std::ifstream probe(path);
    std::string first;
    std::getline(probe, first);
    if (first.empty()) os << LossReport::tsv_header() << "\n";
    metrics_has_header_ = true;
  }
  std::string row = std::to_string(state_.dc_step + state_.g_step);
  row += "\t";
  row += phase;
  for (double v : {r.l_att, r.l_c, r.l_adv_g, r.l_adv_d, r.lipschitz_penalty,
                   r.l_spa, r.l_ovl, r.total_g, r.total_dc})
    append_field(row, v);
  os << row << "\n";
}

std::vector<std::string> Trainer::param_names() const {
  std::vector<std::string> names;
  for (const auto& [n, t] : gen_->store().trainable) names.push_back("g." + n);
  for (const auto& [n, t] : critic_->store().trainable)
    names.push_back("dc." + n);
  return names;
}

TrainState Trainer::capture_state() const {
  TrainState ts = state_;
  ts.data_rng = epoch_start_state_;
  ts.target_rng = target_rng_.state();
  ts.mix_rng = mix_rng_.state();
  ts.name_hash = name_list_hash(param_names());
  ts.adam_g.t = uint64_t(adam_g_->t());
  ts.adam_g.m = adam_g_->moments_m();
  ts.adam_g.v = adam_g_->moments_v();
  ts.adam_dc.t = uint64_t(adam_dc_->t());
  ts.adam_dc.m = adam_dc_->moments_m();
  ts.adam_dc.v = adam_dc_->moments_v();
  return ts;
}

void Trainer::apply_state(const TrainState& ts) {
  if (ts.name_hash != name_list_hash(param_names()))
    throw FormatError("training state does not match this model's parameters");
  state_ = ts;
  data_rng_.set_state(ts.data_rng);
  start_epoch();  // replays the shuffle for the in-progress epoch
  state_.cursor = ts.cursor;
  state_.epoch = ts.epoch;
  state_.g_step = ts.g_step;
  state_.dc_step = ts.dc_step;
  target_rng_.set_state(ts.target_rng);
  mix_rng_.set_state(ts.mix_rng);
  adam_g_->set_t(int64_t(ts.adam_g.t));
  adam_g_->moments_m() = ts.adam_g.m;
  adam_g_->moments_v() = ts.adam_g.v;
  adam_dc_->set_t(int64_t(ts.adam_dc.t));
  adam_dc_->moments_m() = ts.adam_dc.m;
  adam_dc_->moments_v() = ts.adam_dc.v;
}

void Trainer::save_checkpoint(const std::string& path) const {
  ParamFile pf = snapshot_editor(*gen_, *critic_);
  write_params(pf, path);
  write_train_state(capture_state(), path + ".state");
}

void Trainer::resume(const std::string& ckpt_path) {
  ParamFile pf = read_params(ckpt_path);
  ModelConfig want = cfg_.model();
  ModelConfig got = config_from_meta(pf);
  if (got.size != want.size || got.base_c != want.base_c ||
      got.n_attrs != want.n_attrs || got.steps != want.steps ||
      got.single_mask != want.single_mask ||
      got.residual_masks != want.residual_masks)
    throw FormatError(cat("checkpoint mismatch: size=", got.size, "/",
                          want.size, " C=", got.base_c, "/", want.base_c,
                          " n=", got.n_attrs, "/", want.n_attrs, " steps=",
                          got.steps, "/", want.steps));
  restore_editor(pf, *gen_, *critic_);
  apply_state(read_train_state(ckpt_path + ".state"));
}

std::string Trainer::run() {
  while (state_.g_step < uint64_t(cfg_.total_g_steps)) {
    for (int j = 0; j < cfg_.n_critic; ++j)
      append_metrics(step_dc(), "dc");
    append_metrics(step_g(), "g");
    if (cfg_.ckpt_every > 0 &&
        state_.g_step % uint64_t(cfg_.ckpt_every) == 0 &&
        state_.g_step < uint64_t(cfg_.total_g_steps)) {
      save_checkpoint(cfg_.out_dir + "/ckpt-" + step_tag(state_.g_step) +
                      ".bin");
    }
  }
  std::string final_path = cfg_.out_dir + "/ckpt-final.bin";
  save_checkpoint(final_path);
  return final_path;
}

double Trainer::interpolate_grad_norm() {
  int bs = std::min(cfg_.batch_size, data_.count());
  std::vector<int> idx(bs);
  std::iota(idx.begin(), idx.end(), 0);
  Tensor<float> x = batch_images<float>(data_, idx);
  Tensor<float> a = batch_attrs<float>(data_, idx);
  Rng trng = Rng(cfg_.seed).fork(21);
  Rng mrng = Rng(cfg_.seed).fork(22);
  Tensor<float> b = sample_targets(a, trng);
  Tensor<float> fake;
  {
    NoGradGuard ng;
    fake = gen_->forward(x, a, b, true, false).image;
  }
  std::vector<float> ev(size_t(bs), 0.0f);
  for (auto& e : ev) e = float(mrng.uniform());
  Tensor<float> eps = Tensor<float>::from_vec({bs}, ev);
  Tensor<float> be = broadcast_sample(eps, x.shape());
  Tensor<float> ones = Tensor<float>::full(x.shape(), 1.0f);
  Tensor<float> mix = add(mul(be, x), mul(sub(ones, be), fake));
  mix.set_requires_grad(true);
  Tensor<float> s = sum(critic_->forward(mix).score);
  Tensor<float> g = grad(s, {mix}, /*create_graph=*/false)[0];
  Tensor<float> norm = sqrt(add_scalar(sum_per_sample(mul(g, g)), 1e-12f));
  return mean(norm).item();
}

PredictorResult train_predictor(const PredictorTrainConfig& cfg,
                                const Dataset& train, const Dataset& test,
                                PredictorNet<float>& net) {
  if (train.size != cfg.size || train.n != cfg.n_attrs)
    throw FormatError(cat("predictor: dataset size=", train.size,
                          " n=", train.n, ", config wants size=", cfg.size,
                          " n=", cfg.n_attrs));
  Adam<float> opt(net.store().params(), float(cfg.lr), float(cfg.beta1),
                  float(cfg.beta2), float(cfg.adam_eps));
  Rng shuffle_rng = Rng(cfg.seed).fork(31);
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<int> order(train.count());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    for (size_t at = 0; at < order.size(); at += size_t(cfg.batch_size)) {
      size_t hi = std::min(order.size(), at + size_t(cfg.batch_size));
      std::vector<int> idx(order.begin() + ptrdiff_t(at),
                           order.begin() + ptrdiff_t(hi));
      net.store().zero_grads();
      Tensor<float> probs = net.forward(batch_images<float>(train, idx),
                                        /*train=*/true, /*update_stats=*/true);
      Tensor<float> loss = bce_loss(probs, batch_attrs<float>(train, idx));
      for (float v : loss.values())
        if (!std::isfinite(v))
          throw NumericError("predictor loss is non-finite");
      backward(loss);
      opt.step();
    }
  }
  PredictorResult res;
  res.test_accuracy = predictor_accuracy(net, test);
  for (double a : res.test_accuracy) res.mean_accuracy += a;
  res.mean_accuracy /= double(res.test_accuracy.size());
  return res;
}

std::vector<double> predictor_accuracy(const PredictorNet<float>& net,
                                       const Dataset& ds) {
  NoGradGuard ng;
  int n = ds.n;
  std::vector<int64_t> hits(size_t(n), 0);
  const int bs = 100;
  for (int at = 0; at < ds.count(); at += bs) {
    int hi = std::min(ds.count(), at + bs);
    std::vector<int> idx(size_t(hi - at));
    std::iota(idx.begin(), idx.end(), at);
    Tensor<float> probs = net.forward(batch_images<float>(ds, idx));
    auto pv = probs.values();
    for (int i = 0; i < hi - at; ++i)
      for (int j = 0; j < n; ++j) {
        int bit = pv[size_t(i) * n + j] >= 0.5f ? 1 : 0;
        if (bit == ds.samples[idx[i]].attrs[j]) ++hits[j];
      }
  }
  std::vector<double> acc(size_t(n), 0.0);
  for (int j = 0; j < n; ++j) acc[j] = double(hits[j]) / double(ds.count());
  return acc;
}

}  // namespace attredit
