// Release gate. Each numbered check prints exactly one pass/fail line with
// its runtime; the exit code is the number of failures.
//
// Checks 1-5 and 7 run live: kernel oracles, architecture invariants, loss
// closed forms, the predictor floor, a smoke-scale training run with its
// baselines, and a bit-exact repeat of that run. The desk-scale experiment
// and the three-seed ablation study take hours of CPU, so by default their
// committed reference reports (tests/data/*.tsv) are validated against the
// score floors instead. Passing --full reruns both live and rewrites the
// reference reports in place.
//
// Usage: acceptance [--full] [--data-dir=PATH] [--only=1,2,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "attredit/eval.hpp"
#include "attredit/model_io.hpp"
#include "attredit/reference_kernels.hpp"
#include "gradcheck.hpp"

using namespace attredit;
namespace fs = std::filesystem;

namespace {

using Notes = std::vector<std::string>;

void expect(Notes& notes, bool ok, const std::string& msg) {
  if (!ok) notes.push_back(msg);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(),
                     sizeof(float) * size_t(a.numel())) == 0;
}

bool same_file_bytes(const fs::path& a, const fs::path& b, Notes& notes) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) {
    notes.push_back("cannot open " + (fa ? b : a).string());
    return false;
  }
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

// Fixtures carried between checks so the expensive ones run once.
struct Ctx {
  bool full = false;
  fs::path data_dir;  // committed reference reports
  fs::path work;      // scratch; wiped at startup

  Dataset desk_train, desk_test;  // filled by check 4
  Manifest desk_manifest;
  std::shared_ptr<PredictorNet<float>> desk_predictor;

  Dataset smoke_train, smoke_test;  // filled by check 5
  Manifest smoke_manifest;
  std::shared_ptr<PredictorNet<float>> smoke_predictor;
  TrainConfig smoke_cfg;
  std::string smoke_final;  // run-A final checkpoint, consumed by check 7
};

ModelConfig micro_model() {
  ModelConfig mc;
  mc.size = 16;
  mc.base_c = 4;
  mc.n_attrs = 2;
  mc.seed = 5;
  mc.mask_head_zero_init = false;  // random masks exercise the clamps
  return mc;
}

Tensor<float> micro_batch(int n, int size, uint64_t seed0) {
  std::vector<float> v;
  for (int i = 0; i < n; ++i) {
    SynthSample s = render_sample(seed0 + uint64_t(i),
                                  {uint8_t(i & 1), uint8_t((i >> 1) & 1)},
                                  size);
    v.insert(v.end(), s.image.begin(), s.image.end());
  }
  return Tensor<float>::from_vec({n, 3, size, size}, std::move(v));
}

Tensor<float> attr_rows(std::vector<float> bits, int n, int d) {
  return Tensor<float>::from_vec({n, d}, std::move(bits));
}

// ---------------------------------------------------------------------------
// 1. Kernel forwards against naive loop oracles at 1e-12; every class of op
//    and loss passes a finite-difference gradient check below 1e-5,
//    including the double-backward path through the gradient penalty.

void check_numeric_oracles(Ctx&, Notes& notes) {
  using gradcheck::check;
  using gradcheck::rand_distinct;
  using gradcheck::rand_tensor;
  const double kGradTol = 1e-5;
  Rng rng(3001);

  auto worst_abs = [](const Tensor<double>& y, const std::vector<double>& w) {
    double worst = 0;
    for (int i = 0; i < y.numel(); ++i)
      worst = std::max(worst, std::abs(y.values()[size_t(i)] - w[size_t(i)]));
    return worst;
  };

  struct ConvGeo {
    int n, cin, h, w, cout, k, stride, pad;
  };
  for (ConvGeo g : {ConvGeo{2, 3, 9, 7, 4, 4, 2, 1},
                    ConvGeo{1, 2, 8, 8, 3, 3, 1, 1},
                    ConvGeo{2, 4, 5, 6, 2, 1, 1, 0}}) {
    Tensor<double> x = rand_tensor(rng, {g.n, g.cin, g.h, g.w});
    Tensor<double> w = rand_tensor(rng, {g.cout, g.cin, g.k, g.k});
    Tensor<double> y = conv2d(x, w, g.stride, g.pad);
    int oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    int ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
    std::vector<double> want(size_t(g.n) * g.cout * oh * ow, 0.0);
    ref::conv2d(x.values().data(), w.values().data(), want.data(), g.n,
                g.cin, g.h, g.w, g.cout, g.k, g.stride, g.pad, oh, ow);
    double d = worst_abs(y, want);
    expect(notes, d <= 1e-12, "conv2d vs loop oracle off by " + num(d));
  }

  struct DeconvGeo {
    int n, cin, h, w, cout, k, stride, pad, op;
  };
  for (DeconvGeo g : {DeconvGeo{2, 4, 4, 3, 3, 4, 2, 1, 0},
                      DeconvGeo{1, 3, 5, 5, 2, 3, 2, 1, 1}}) {
    Tensor<double> x = rand_tensor(rng, {g.n, g.cin, g.h, g.w});
    Tensor<double> w = rand_tensor(rng, {g.cin, g.cout, g.k, g.k});
    int outh = (g.h - 1) * g.stride - 2 * g.pad + g.k + g.op;
    int outw = (g.w - 1) * g.stride - 2 * g.pad + g.k + g.op;
    Tensor<double> y = deconv2d(x, w, g.stride, g.pad, g.op);
    std::vector<double> want(size_t(g.n) * g.cout * outh * outw, 0.0);
    ref::deconv2d(x.values().data(), w.values().data(), want.data(), g.n,
                  g.cin, g.h, g.w, g.cout, g.k, g.stride, g.pad, outh, outw);
    double d = worst_abs(y, want);
    expect(notes, d <= 1e-12, "deconv2d vs loop oracle off by " + num(d));
  }

  {
    int n = 2, cp = 3, ph = 4, pw = 3, cq = 2, k = 4, stride = 2, pad = 1;
    int qh = (ph - 1) * stride - 2 * pad + k;
    int qw = (pw - 1) * stride - 2 * pad + k;
    Tensor<double> p = rand_tensor(rng, {n, cp, ph, pw});
    Tensor<double> q = rand_tensor(rng, {n, cq, qh, qw});
    Tensor<double> dw = conv_wgrad(p, q, k, stride, pad);
    std::vector<double> want(size_t(cp) * cq * k * k, 0.0);
    ref::conv_wgrad(p.values().data(), q.values().data(), want.data(), n, cp,
                    ph, pw, cq, qh, qw, k, stride, pad);
    double d = worst_abs(dw, want);
    expect(notes, d <= 1e-12, "conv_wgrad vs loop oracle off by " + num(d));
  }

  auto fd = [&](const char* name, gradcheck::Report rep) {
    expect(notes, rep.max_rel < kGradTol,
           std::string(name) + " gradient off by rel " + num(rep.max_rel) +
               " at " + rep.where);
  };

  {  // elementwise chain with broadcasting ops in the mix
    Tensor<double> x = rand_tensor(rng, {2, 3, 4, 4}, 0.1, 0.9);
    Tensor<double> y = rand_tensor(rng, {2, 3, 4, 4}, -0.9, -0.1);
    Tensor<double> u = rand_tensor(rng, {2, 3, 4, 4});
    fd("elementwise chain", check([&] {
         return sum(mul(tanh(add(mul(x, y), sigmoid(x))), u));
       }, {x, y}));
  }
  {
    Tensor<double> x = rand_distinct(rng, {2, 2, 6, 6});
    Tensor<double> u = rand_tensor(rng, {2, 2, 3, 3});
    fd("maxpool", check([&] { return sum(mul(maxpool(x, 2, 2), u)); }, {x}));
  }
  {
    Tensor<double> x = rand_tensor(rng, {1, 2, 5, 5});
    Tensor<double> w = rand_tensor(rng, {3, 2, 3, 3});
    Tensor<double> b = rand_tensor(rng, {3});
    Tensor<double> u = rand_tensor(rng, {1, 3, 5, 5});
    fd("conv2d",
       check([&] { return sum(mul(conv2d(x, w, b, 1, 1), u)); }, {x, w, b}));
  }
  {
    Tensor<double> x = rand_tensor(rng, {1, 2, 3, 3});
    Tensor<double> w = rand_tensor(rng, {2, 2, 3, 3});
    Tensor<double> u = rand_tensor(rng, {1, 2, 6, 6});
    fd("deconv2d",
       check([&] { return sum(mul(deconv2d(x, w, 2, 1, 1), u)); }, {x, w}));
  }
  {
    Tensor<double> probs = rand_tensor(rng, {2, 3}, 0.15, 0.85);
    Tensor<double> t = Tensor<double>::from_vec({2, 3}, {1, 0, 1, 0, 0, 1});
    fd("cross entropy", check([&] { return bce_loss(probs, t); }, {probs}));
  }
  {
    Tensor<double> masks = rand_tensor(rng, {2, 3, 4, 4}, 0.05, 0.95);
    Tensor<double> d =
        Tensor<double>::from_vec({2, 3}, {1, -1, 0, 1, 1, -1});
    std::vector<std::pair<int, int>> pairs = {{0, 1}, {1, 2}};
    fd("overlap",
       check([&] { return overlap_loss(masks, pairs, d, true); }, {masks}));
  }

  {  // double backward: penalty gradient w.r.t. the critic's score weights
    ModelConfig mc;
    mc.size = 16;
    mc.base_c = 4;
    mc.n_attrs = 2;
    mc.seed = 11;
    CriticNet<double> critic(mc);
    Rng data_rng(12);
    Tensor<double> xr = rand_tensor(data_rng, {2, 3, 16, 16}, -1, 1);
    Tensor<double> xf = rand_tensor(data_rng, {2, 3, 16, 16}, -1, 1);
    auto f = [&] {
      Rng eps_rng(99);  // identical mix coefficients on every evaluation
      return lipschitz_penalty(critic, xr, xf, eps_rng);
    };
    Tensor<double> head_w;
    for (auto& [name, t] : critic.store().trainable)
      if (name == "headD.fc2.w") head_w = t;
    expect(notes, head_w.defined(), "critic score head weight not found");
    if (head_w.defined()) fd("lipschitz penalty (double backward)",
                             check(f, {head_w}, 1e-5));
  }
}

// ---------------------------------------------------------------------------
// 2. Architecture invariants on a 16x16, two-attribute, C=4 model with
//    random weights, plus a bit-exact checkpoint round-trip.

void check_architecture(Ctx&, Notes& notes) {
  GeneratorNet<float> gen(micro_model());
  Tensor<float> x = micro_batch(3, 16, 900);

  {  // editing toward the current attributes must change nothing at all
    Tensor<float> a = attr_rows({0, 1, 1, 0, 1, 1}, 3, 2);
    for (bool train : {true, false}) {
      GeneratorOut<float> out = gen.forward(x, a, a, train, false);
      expect(notes, bit_equal(out.image, x),
             std::string("no-op edit altered the image in ") +
                 (train ? "train" : "eval") + " mode");
    }
  }

  Tensor<float> a = attr_rows({0, 1, 1, 0, 0, 0}, 3, 2);
  Tensor<float> b = attr_rows({1, 1, 0, 1, 1, 1}, 3, 2);
  GeneratorOut<float> out = gen.forward(x, a, b, true, false);

  {  // the finest mask alpha-blends the edit into the input, bit for bit
    Tensor<float> mfull = expand_channels(out.merged[0], 3);
    Tensor<float> ones = Tensor<float>::full(mfull.shape(), 1.0f);
    Tensor<float> rebuilt =
        add(mul(mfull, out.edited[0]), mul(sub(ones, mfull), x));
    expect(notes, bit_equal(rebuilt, out.image),
           "level-0 blend does not reproduce the output image");
  }

  {
    bool mask_ok = true, image_ok = true;
    for (int k = 0; k < 4; ++k) {
      for (float v : out.masks[k].values())
        mask_ok = mask_ok && v >= 0.0f && v <= 1.0f;
      for (float v : out.merged[k].values())
        mask_ok = mask_ok && v >= 0.0f && v <= 1.0f;
    }
    for (float v : out.image.values())
      image_ok = image_ok && v >= -1.0f && v <= 1.0f;
    expect(notes, mask_ok, "a mask value left [0,1]");
    expect(notes, image_ok, "an output pixel left [-1,1]");
  }

  {  // write, reload into differently seeded nets, demand identical bytes
    CriticNet<float> critic(micro_model());
    fs::path path = fs::temp_directory_path() / "attredit-acceptance" /
                    "roundtrip.bin";
    write_params(snapshot_editor(gen, critic), path.string());
    ModelConfig fresh = micro_model();
    fresh.seed = 99;
    GeneratorNet<float> gen2(fresh);
    CriticNet<float> critic2(fresh);
    ParamFile pf = read_params(path.string());
    restore_editor(pf, gen2, critic2);
    bool params_ok = true;
    for (size_t i = 0; i < gen.store().trainable.size(); ++i)
      params_ok = params_ok && bit_equal(gen.store().trainable[i].second,
                                         gen2.store().trainable[i].second);
    for (size_t i = 0; i < critic.store().trainable.size(); ++i)
      params_ok = params_ok && bit_equal(critic.store().trainable[i].second,
                                         critic2.store().trainable[i].second);
    expect(notes, params_ok, "checkpoint round-trip changed a parameter");
    expect(notes,
           bit_equal(gen.forward(x, a, b, false, false).image,
                     gen2.forward(x, a, b, false, false).image),
           "restored editor disagrees with the original forward pass");
  }
}

// ---------------------------------------------------------------------------
// 3. Loss closed forms.

void check_loss_closed_forms(Ctx&, Notes& notes) {
  {  // four fair coin flips cost 4 ln 2
    Tensor<float> probs = Tensor<float>::full({3, 4}, 0.5f);
    Tensor<float> t = Tensor<float>::from_vec(
        {3, 4}, {0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0});
    double got = double(bce_loss(probs, t).item());
    expect(notes, std::abs(got - 2.772589) < 1e-5,
           "uniform cross entropy " + num(got) + ", want 2.772589");
  }

  {  // masks confined to disjoint attribute footprints never overlap
    int size = 32, n = 4;
    auto pairs = disjoint_pairs(n);
    expect(notes, !pairs.empty(), "no disjoint attribute pairs declared");
    for (uint64_t seed : {101ULL, 202ULL, 303ULL}) {
      std::vector<float> v;
      SynthSample s = render_sample(seed, {1, 1, 1, 1}, size);
      for (int i = 0; i < n; ++i)
        v.insert(v.end(), s.regions[size_t(i)].begin(),
                 s.regions[size_t(i)].end());
      Tensor<float> masks =
          Tensor<float>::from_vec({1, n, size, size}, std::move(v));
      float got = overlap_loss(masks, pairs).item();
      expect(notes, got == 0.0f,
             "disjoint-region overlap " + num(got) + ", want exactly 0");
    }
  }

  {  // a scorer whose input gradient norm is exactly 1 pays no penalty
    struct UnitGradScorer {
      struct Out {
        Tensor<double> probs, score;
      };
      Out forward(const Tensor<double>& x) const {
        int n = x.dim(0);
        double p = double(x.numel() / n);
        Tensor<double> s = scale(sum_per_sample(x), 1.0 / std::sqrt(p));
        return {Tensor<double>(), reshape(s, {n, 1})};
      }
    };
    Rng rng(7);
    Tensor<double> xr = gradcheck::rand_tensor(rng, {4, 3, 8, 8}, -1.0, 1.0);
    Tensor<double> xf = gradcheck::rand_tensor(rng, {4, 3, 8, 8}, -1.0, 1.0);
    UnitGradScorer scorer;
    double pen = lipschitz_penalty(scorer, xr, xf, rng).item();
    expect(notes, std::abs(pen) < 1e-9,
           "unit-gradient scorer penalty " + num(pen) + ", want 0");
  }

  {  // default weights against a hand computation
    LossReport r;
    r.l_att = 2.772589;
    r.l_adv_g = -0.25;
    r.l_spa = 0.125;
    r.l_ovl = 0.03125;
    r.l_c = 0.693147;
    r.l_adv_d = 0.5;
    r.lipschitz_penalty = 0.01;
    LossWeights w;
    r.fill_totals(w);
    expect(notes, std::abs(r.total_g - 55.23928) < 1e-5,
           "weighted generator total " + num(r.total_g) + ", want 55.23928");
    expect(notes, std::abs(r.total_dc - 0.293147) < 1e-5,
           "weighted critic total " + num(r.total_dc) + ", want 0.293147");
  }
}

// ---------------------------------------------------------------------------
// 4. The evaluation predictor reaches 0.98 per-attribute accuracy on the
//    held-out 2000-sample split within its ten-minute training budget.

void check_predictor_floor(Ctx& c, Notes& notes) {
  auto paths = gen_dataset(8000, 2000, 7, 32, 4, (c.work / "desk-d").string());
  c.desk_train = read_dataset(paths.first);
  c.desk_test = read_dataset(paths.second);
  c.desk_manifest = read_manifest((c.work / "desk-d-manifest.txt").string());

  ModelConfig mc;
  mc.size = 32;
  mc.n_attrs = 4;
  mc.seed = 1;
  c.desk_predictor = std::make_shared<PredictorNet<float>>(mc);
  PredictorTrainConfig pc;
  pc.size = 32;
  pc.n_attrs = 4;
  pc.epochs = 12;
  pc.seed = 1;

  auto t0 = std::chrono::steady_clock::now();
  PredictorResult r =
      train_predictor(pc, c.desk_train, c.desk_test, *c.desk_predictor);
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  for (size_t i = 0; i < r.test_accuracy.size(); ++i)
    expect(notes, r.test_accuracy[i] >= 0.98,
           "attribute " + std::to_string(i) + " accuracy " +
               num(r.test_accuracy[i]) + ", floor 0.98");
  expect(notes, secs < 600.0,
         "predictor training took " + num(secs) + "s, budget 600s");
}

// ---------------------------------------------------------------------------
// 5. Training runs reach their score floors. The smoke run (16x16, two
//    attributes, 2000 steps) always runs live with identity and re-render
//    baselines. The desk-scale scores come from the committed reference
//    report unless --full reruns the whole experiment.

// Parses the "mean" row of an editing report; returns false when absent.
bool read_mean_row(const fs::path& p, double& acc, double& err) {
  std::ifstream in(p);
  if (!in) return false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("mean\t", 0) != 0) continue;
    std::istringstream row(line);
    std::string tag, a, e;
    std::getline(row, tag, '\t');
    std::getline(row, a, '\t');
    std::getline(row, e, '\t');
    acc = std::stod(a);
    err = std::stod(e);
    return true;
  }
  return false;
}

GeneratorNet<float> editor_from(const std::string& ckpt) {
  ParamFile pf = read_params(ckpt);
  ModelConfig mc = config_from_meta(pf);
  GeneratorNet<float> gen(mc);
  CriticNet<float> critic(mc);
  restore_editor(pf, gen, critic);
  return gen;
}

void check_training_floors(Ctx& c, Notes& notes) {
  {  // smoke dataset and its evaluation predictor
    auto paths =
        gen_dataset(2000, 500, 7, 16, 2, (c.work / "smoke-d").string());
    c.smoke_train = read_dataset(paths.first);
    c.smoke_test = read_dataset(paths.second);
    c.smoke_manifest =
        read_manifest((c.work / "smoke-d-manifest.txt").string());
    ModelConfig mc;
    mc.size = 16;
    mc.n_attrs = 2;
    mc.seed = 4;
    c.smoke_predictor = std::make_shared<PredictorNet<float>>(mc);
    PredictorTrainConfig pc;
    pc.size = 16;
    pc.n_attrs = 2;
    pc.epochs = 12;
    pc.seed = 4;
    PredictorResult pr =
        train_predictor(pc, c.smoke_train, c.smoke_test, *c.smoke_predictor);
    expect(notes, pr.mean_accuracy >= 0.98,
           "smoke predictor accuracy " + num(pr.mean_accuracy) +
               ", floor 0.98");
  }

  {  // smoke training run, ten-minute budget
    TrainConfig tc;
    tc.size = 16;
    tc.base_c = 8;
    tc.n_attrs = 2;
    tc.batch_size = 32;
    tc.n_critic = 5;
    tc.total_g_steps = 2000;
    tc.ckpt_every = 0;
    tc.seed = 1;
    tc.out_dir = (c.work / "smoke-a").string();
    fs::create_directories(tc.out_dir);

    auto t0 = std::chrono::steady_clock::now();
    Trainer tr(tc, c.smoke_train);
    std::string final_path = tr.run();
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    c.smoke_cfg = tc;
    c.smoke_final = final_path;  // consumed by the repeatability check
    expect(notes, secs <= 600.0,
           "smoke training took " + num(secs) + "s, budget 600s");

    auto gen = std::make_shared<GeneratorNet<float>>(editor_from(final_path));
    CheckpointModel model(gen);
    EvalReport er = evaluate(model, *c.smoke_predictor, c.smoke_test);
    expect(notes, er.mean_accuracy >= 0.75,
           "smoke editing accuracy " + num(er.mean_accuracy) + ", floor 0.75");
  }

  {  // baselines calibrate both metrics
    IdentityModel identity;
    EvalReport ir = evaluate(identity, *c.smoke_predictor, c.smoke_test);
    expect(notes, ir.mean_error == 0.0,
           "identity baseline error " + num(ir.mean_error) +
               ", want exactly 0");
    OracleModel oracle(c.smoke_manifest.test_seeds);
    EvalReport orr = evaluate(oracle, *c.smoke_predictor, c.smoke_test);
    expect(notes, orr.mean_error == 0.0,
           "re-render baseline error " + num(orr.mean_error) +
               ", want exactly 0");
    expect(notes, orr.mean_accuracy >= 0.98,
           "re-render baseline accuracy " + num(orr.mean_accuracy) +
               ", floor 0.98");
  }

  // Desk scale: 32x32, four attributes, C=16, 8000 samples, 20000 steps.
  if (c.full) {
    if (!c.desk_predictor) {
      notes.push_back("desk fixtures unavailable (check 4 failed)");
      return;
    }
    TrainConfig dc;  // the defaults are the desk protocol
    dc.seed = 1;
    dc.ckpt_every = 0;
    dc.out_dir = (c.work / "desk-run").string();
    fs::create_directories(dc.out_dir);
    Trainer tr(dc, c.desk_train);
    std::string final_path = tr.run();

    std::string echo = "size=32 C=16 n=4 train=8000 g_steps=20000 seed=1";
    auto gen = std::make_shared<GeneratorNet<float>>(editor_from(final_path));
    CheckpointModel model(gen);
    EvalReport er = evaluate(model, *c.desk_predictor, c.desk_test, 0.98, echo);
    IdentityModel identity;
    EvalReport ir =
        evaluate(identity, *c.desk_predictor, c.desk_test, 0.98, echo);
    OracleModel oracle(c.desk_manifest.test_seeds);
    EvalReport orr =
        evaluate(oracle, *c.desk_predictor, c.desk_test, 0.98, echo);

    fs::create_directories(c.data_dir);
    std::ofstream(c.data_dir / "desk-eval-checkpoint.tsv") << er.to_tsv();
    std::ofstream(c.data_dir / "desk-eval-identity.tsv") << ir.to_tsv();
    std::ofstream(c.data_dir / "desk-eval-oracle.tsv") << orr.to_tsv();

    expect(notes, er.mean_accuracy >= 0.85,
           "desk editing accuracy " + num(er.mean_accuracy) + ", floor 0.85");
    expect(notes, er.mean_error <= 0.03,
           "desk preservation error " + num(er.mean_error) +
               ", ceiling 0.03");
    expect(notes, ir.mean_error == 0.0,
           "desk identity baseline error " + num(ir.mean_error) +
               ", want exactly 0");
    expect(notes, orr.mean_accuracy >= 0.98,
           "desk re-render baseline accuracy " + num(orr.mean_accuracy) +
               ", floor 0.98");
  } else {
    double acc = 0, err = 0;
    fs::path p = c.data_dir / "desk-eval-checkpoint.tsv";
    if (!read_mean_row(p, acc, err)) {
      notes.push_back("reference report missing or malformed: " + p.string() +
                      "; rerun with --full to regenerate");
    } else {
      expect(notes, acc >= 0.85,
             "desk editing accuracy " + num(acc) + ", floor 0.85");
      expect(notes, err <= 0.03,
             "desk preservation error " + num(err) + ", ceiling 0.03");
    }
    p = c.data_dir / "desk-eval-identity.tsv";
    if (!read_mean_row(p, acc, err)) {
      notes.push_back("reference report missing or malformed: " + p.string() +
                      "; rerun with --full to regenerate");
    } else {
      expect(notes, err == 0.0, "desk identity baseline error " + num(err) +
                                    ", want exactly 0");
    }
    p = c.data_dir / "desk-eval-oracle.tsv";
    if (!read_mean_row(p, acc, err)) {
      notes.push_back("reference report missing or malformed: " + p.string() +
                      "; rerun with --full to regenerate");
    } else {
      expect(notes, acc >= 0.98, "desk re-render baseline accuracy " +
                                     num(acc) + ", floor 0.98");
    }
  }
}

// ---------------------------------------------------------------------------
// 6. Ablation directionality over three seeds: the full model beats the
//    non-residual and shared-mask lesions on both metrics, and scores
//    improve monotonically in the number of progressive levels, allowing
//    one adjacent inversion within one standard deviation of seed noise.

bool parse_ablation_rows(const fs::path& p, AblationTable& t, Notes& notes) {
  std::ifstream in(p);
  if (!in) {
    notes.push_back("reference report missing: " + p.string() +
                    "; rerun with --full to regenerate");
    return false;
  }
  std::string line;
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') break;  // summary section
    std::istringstream row(line);
    AblationRow r;
    std::string seed, acc, err;
    std::getline(row, r.variant, '\t');
    std::getline(row, seed, '\t');
    std::getline(row, acc, '\t');
    std::getline(row, err, '\t');
    r.seed = std::stoull(seed);
    r.accuracy = std::stod(acc);
    r.error = std::stod(err);
    t.rows.push_back(r);
  }
  return true;
}

void check_ablation_direction(Ctx& c, Notes& notes) {
  AblationTable t;
  if (c.full) {
    AblationConfig ac;
    ac.base.size = 16;
    ac.base.base_c = 8;
    ac.base.n_attrs = 4;
    ac.base.batch_size = 32;
    ac.base.n_critic = 5;
    ac.base.total_g_steps = 2000;
    ac.base.ckpt_every = 0;
    ac.predictor.size = 16;
    ac.predictor.n_attrs = 4;
    ac.predictor.epochs = 12;
    ac.n_train = 2000;
    ac.n_test = 500;
    ac.seeds = {1, 2, 3};
    ac.work_dir = (c.work / "ablate").string();
    fs::create_directories(ac.work_dir);
    t = run_ablations(ac);
    fs::create_directories(c.data_dir);
    std::ofstream(c.data_dir / "ablation-report.tsv") << t.to_tsv();
  } else if (!parse_ablation_rows(c.data_dir / "ablation-report.tsv", t,
                                  notes)) {
    return;
  }

  auto vs = t.variants();
  for (const char* want : {"full", "no_residual", "single_mask", "steps1",
                           "steps2", "steps3", "steps4"}) {
    if (std::find(vs.begin(), vs.end(), want) == vs.end()) {
      notes.push_back(std::string("report lacks variant ") + want);
      return;
    }
  }

  double acc_full = t.mean("full", false), err_full = t.mean("full", true);
  for (const char* lesion : {"no_residual", "single_mask"}) {
    double acc = t.mean(lesion, false), err = t.mean(lesion, true);
    expect(notes, acc_full > acc,
           "accuracy full " + num(acc_full) + " not above " + lesion + " " +
               num(acc));
    expect(notes, err_full < err,
           "error full " + num(err_full) + " not below " + lesion + " " +
               num(err));
  }

  const char* steps[] = {"steps1", "steps2", "steps3", "steps4"};
  for (bool err : {false, true}) {
    int waived = 0;
    for (int i = 0; i < 3; ++i) {
      double lo = t.mean(steps[i], err), hi = t.mean(steps[i + 1], err);
      double inversion = err ? hi - lo : lo - hi;  // positive = wrong way
      if (inversion <= 0) continue;
      double noise = std::max(t.stdev(steps[i], err),
                              t.stdev(steps[i + 1], err));
      if (inversion <= noise && waived == 0) {
        ++waived;
        continue;
      }
      expect(notes, false,
             std::string(err ? "error" : "accuracy") + " inverts from " +
                 steps[i] + " (" + num(lo) + ") to " + steps[i + 1] + " (" +
                 num(hi) + ") beyond the one-inversion noise allowance " +
                 num(noise));
    }
  }
}

// ---------------------------------------------------------------------------
// 7. Repeating the smoke run with the same seed reproduces the checkpoint,
//    the optimizer state, the metrics log, and an exported mask grid byte
//    for byte.

void check_repeatability(Ctx& c, Notes& notes) {
  if (c.smoke_final.empty()) {
    notes.push_back("smoke run unavailable (check 5 failed)");
    return;
  }
  TrainConfig tb = c.smoke_cfg;
  tb.out_dir = (c.work / "smoke-b").string();
  fs::create_directories(tb.out_dir);
  Trainer tr(tb, c.smoke_train);
  std::string final_b = tr.run();

  fs::path da = c.smoke_cfg.out_dir, db = tb.out_dir;
  for (const char* f :
       {"ckpt-final.bin", "ckpt-final.bin.state", "metrics.tsv"}) {
    expect(notes, same_file_bytes(da / f, db / f, notes),
           std::string(f) + " differs between identically seeded runs");
  }

  GeneratorNet<float> ga = editor_from(c.smoke_final);
  GeneratorNet<float> gb = editor_from(final_b);
  const SynthSample& sample = c.smoke_test.samples[0];
  std::vector<uint8_t> targets;
  for (uint8_t v : sample.attrs) targets.push_back(uint8_t(1 - v));
  fs::path pa = c.work / "masks-a.ppm", pb = c.work / "masks-b.ppm";
  export_masks(ga, sample, targets, pa.string());
  export_masks(gb, sample, targets, pb.string());
  expect(notes, same_file_bytes(pa, pb, notes),
         "exported mask grids differ between identically seeded runs");
}

}  // namespace

int main(int argc, char** argv) {
  Ctx c;
  c.data_dir = ACCEPTANCE_DATA_DIR;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--full") {
      c.full = true;
    } else if (a.rfind("--data-dir=", 0) == 0) {
      c.data_dir = a.substr(11);
    } else if (a.rfind("--only=", 0) == 0) {
      std::istringstream list(a.substr(7));
      std::string id;
      while (std::getline(list, id, ',')) only.push_back(std::stoi(id));
    } else {
      std::fprintf(stderr,
                   "usage: acceptance [--full] [--data-dir=PATH]"
                   " [--only=1,2,...]\n");
      return 64;
    }
  }
  c.work = fs::temp_directory_path() / "attredit-acceptance";
  std::error_code ec;
  fs::remove_all(c.work, ec);
  fs::create_directories(c.work);

  struct Check {
    int id;
    const char* label;
    void (*fn)(Ctx&, Notes&);
  };
  const Check checks[] = {
      {1, "kernel oracles and finite-difference gradients",
       check_numeric_oracles},
      {2, "micro-model architecture invariants", check_architecture},
      {3, "loss closed forms", check_loss_closed_forms},
      {4, "evaluation predictor accuracy floor", check_predictor_floor},
      {5, "training runs reach their score floors", check_training_floors},
      {6, "ablation directionality", check_ablation_direction},
      {7, "bit-exact repeatability", check_repeatability},
  };

  int failures = 0;
  int ran = 0;
  for (const Check& ck : checks) {
    if (!only.empty() &&
        std::find(only.begin(), only.end(), ck.id) == only.end())
      continue;
    ++ran;
    auto t0 = std::chrono::steady_clock::now();
    Notes notes;
    try {
      ck.fn(c, notes);
    } catch (const std::exception& e) {
      notes.push_back(std::string("unexpected exception: ") + e.what());
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    bool ok = notes.empty();
    failures += ok ? 0 : 1;
    std::printf("criterion %d [%s] %s (%.0fs)\n", ck.id, ok ? "PASS" : "FAIL",
                ck.label, secs);
    for (const std::string& n : notes) std::printf("  - %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failures, ran);
  return failures;
}
