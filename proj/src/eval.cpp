#include "attredit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>

namespace attredit {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::vector<uint8_t>> flipped_targets(const Dataset& ds,
                                                  const std::vector<int>& idx,
                                                  int attr) {
  std::vector<std::vector<uint8_t>> t(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    t[i] = ds.samples[idx[i]].attrs;
    t[i][attr] ^= 1;
  }
  return t;
}

Tensor<float> targets_tensor(const std::vector<std::vector<uint8_t>>& t) {
  int n = int(t.size()), d = int(t[0].size());
  std::vector<float> v(size_t(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) v[size_t(i) * d + j] = float(t[i][j]);
  return Tensor<float>::from_vec({n, d}, std::move(v));
}

constexpr int kEvalBatch = 100;

}  // namespace

Tensor<float> CheckpointModel::edit(
    const Dataset& ds, const std::vector<int>& idx,
    const std::vector<std::vector<uint8_t>>& targets) {
  NoGradGuard ng;
  Tensor<float> x = batch_images<float>(ds, idx);
  Tensor<float> a = batch_attrs<float>(ds, idx);
  Tensor<float> b = targets_tensor(targets);
  return gen_->forward(x, a, b, /*train=*/false).image;
}

Tensor<float> IdentityModel::edit(
    const Dataset& ds, const std::vector<int>& idx,
    const std::vector<std::vector<uint8_t>>&) {
  return batch_images<float>(ds, idx);
}

Tensor<float> OracleModel::edit(
    const Dataset& ds, const std::vector<int>& idx,
    const std::vector<std::vector<uint8_t>>& targets) {
  if (seeds_.size() != size_t(ds.count()))
    throw FormatError(cat("oracle: ", seeds_.size(), " seeds for ",
                          ds.count(), " samples"));
  int hw = ds.size * ds.size * 3;
  std::vector<float> v(idx.size() * size_t(hw));
  for (size_t i = 0; i < idx.size(); ++i) {
    SynthSample s = render_sample(seeds_[idx[i]], targets[i], ds.size);
    for (int j = 0; j < hw; ++j)
      v[i * size_t(hw) + j] = dequantize_px(quantize_px(s.image[j]));
  }
  return Tensor<float>::from_vec({int(idx.size()), 3, ds.size, ds.size},
                                 std::move(v));
}

std::vector<double> editing_accuracy(EditModel& model,
                                     const PredictorNet<float>& predictor,
                                     const Dataset& test) {
  NoGradGuard ng;
  int n = test.n;
  std::vector<int64_t> hits(size_t(n), 0);
  for (int attr = 0; attr < n; ++attr) {
    for (int at = 0; at < test.count(); at += kEvalBatch) {
      int hi = std::min(test.count(), at + kEvalBatch);
      std::vector<int> idx(size_t(hi - at));
      std::iota(idx.begin(), idx.end(), at);
      auto targets = flipped_targets(test, idx, attr);
      Tensor<float> edited = model.edit(test, idx, targets);
      Tensor<float> probs = predictor.forward(edited);
      auto pv = probs.values();
      for (size_t i = 0; i < idx.size(); ++i) {
        int bit = pv[i * size_t(n) + attr] >= 0.5f ? 1 : 0;
        if (bit == targets[i][attr]) ++hits[attr];
      }
    }
  }
  std::vector<double> acc(size_t(n), 0.0);
  for (int j = 0; j < n; ++j) acc[j] = double(hits[j]) / double(test.count());
  return acc;
}

std::vector<double> preservation_error(EditModel& model,
                                       const Dataset& test) {
  NoGradGuard ng;
  int n = test.n, size = test.size;
  size_t px = size_t(size) * size;
  std::vector<double> err(size_t(n), 0.0);
  for (int attr = 0; attr < n; ++attr) {
    std::vector<uint8_t> region = irrelevant_region(attr, size);
    int64_t area = std::count(region.begin(), region.end(), uint8_t(1));
    if (area == 0)
      throw FormatError(cat("irrelevant region for attribute ", attr,
                            " is empty"));
    double total = 0;
    for (int at = 0; at < test.count(); at += kEvalBatch) {
      int hi = std::min(test.count(), at + kEvalBatch);
      std::vector<int> idx(size_t(hi - at));
      std::iota(idx.begin(), idx.end(), at);
      auto targets = flipped_targets(test, idx, attr);
      Tensor<float> edited = model.edit(test, idx, targets);
      Tensor<float> orig = batch_images<float>(test, idx);
      auto ev = edited.values();
      auto ov = orig.values();
      for (size_t i = 0; i < idx.size(); ++i) {
        double s = 0;
        for (int c = 0; c < 3; ++c) {
          size_t base = (i * 3 + size_t(c)) * px;
          for (size_t p = 0; p < px; ++p)
            if (region[p]) s += std::abs(double(ev[base + p]) -
                                         double(ov[base + p]));
        }
        total += s / (3.0 * double(area));
      }
    }
    err[size_t(attr)] = total / double(test.count());
  }
  return err;
}

std::string EvalReport::to_tsv() const {
  std::string out;
  out += "# editing evaluation: model=" + model_name +
         " samples=" + std::to_string(sample_count) + "\n";
  if (!config_echo.empty()) out += "# config: " + config_echo + "\n";
  out += "attr\taccuracy\terror_raw\terror_x100\tpredictor_accuracy\n";
  for (size_t i = 0; i < accuracy.size(); ++i) {
    out += std::to_string(i) + "\t" + fmt(accuracy[i]) + "\t" +
           fmt(error[i]) + "\t" + fmt(error[i] * 100.0) + "\t" +
           fmt(predictor_accuracy[i]) + "\n";
  }
  out += "mean\t" + fmt(mean_accuracy) + "\t" + fmt(mean_error) + "\t" +
         fmt(mean_error * 100.0) + "\t-\n";
  return out;
}

EvalReport evaluate(EditModel& model, const PredictorNet<float>& predictor,
                    const Dataset& test, double predictor_floor,
                    const std::string& config_echo) {
  EvalReport r;
  r.model_name = model.name();
  r.config_echo = config_echo;
  r.sample_count = test.count();
  r.predictor_accuracy = attredit::predictor_accuracy(predictor, test);
  for (double a : r.predictor_accuracy)
    if (a < predictor_floor)
      throw FormatError(cat("predictor accuracy ",
                            fmt(*std::min_element(
                                r.predictor_accuracy.begin(),
                                r.predictor_accuracy.end())),
                            " below required floor ", fmt(predictor_floor),
                            "; refusing to evaluate"));
  uint64_t pred_hash = param_bytes_hash(predictor.store());
  r.accuracy = editing_accuracy(model, predictor, test);
  r.error = preservation_error(model, test);
  if (param_bytes_hash(predictor.store()) != pred_hash)
    throw NumericError("evaluation mutated predictor parameters");
  r.mean_accuracy =
      std::accumulate(r.accuracy.begin(), r.accuracy.end(), 0.0) /
      double(r.accuracy.size());
  r.mean_error = std::accumulate(r.error.begin(), r.error.end(), 0.0) /
                 double(r.error.size());
  return r;
}

void export_masks(const GeneratorNet<float>& gen, const SynthSample& sample,
                  const std::vector<uint8_t>& target_attrs,
                  const std::string& path, ImageWriteStats* stats) {
  NoGradGuard ng;
  int size = sample.size, n = sample.n;
  if (int(target_attrs.size()) != n)
    throw FormatError("export_masks: target attribute count mismatch");
  std::vector<float> xv(sample.image.begin(), sample.image.end());
  Tensor<float> x = Tensor<float>::from_vec({1, 3, size, size}, xv);
  std::vector<float> av(size_t(n), 0.0f), bv(size_t(n), 0.0f);
  for (int i = 0; i < n; ++i) {
    av[size_t(i)] = float(sample.attrs[i]);
    bv[size_t(i)] = float(target_attrs[i]);
  }
  Tensor<float> a = Tensor<float>::from_vec({1, n}, av);
  Tensor<float> b = Tensor<float>::from_vec({1, n}, bv);
  GeneratorOut<float> out = gen.forward(x, a, b, /*train=*/false);

  auto to_panel = [&](Tensor<float> m) {  // [1,1,h,w] -> [3,size,size]
    while (m.dim(2) < size) m = upsample_nearest2x(m);
    return gray_to_rgb(reshape(m, {1, m.dim(2), m.dim(3)}));
  };
  std::vector<Tensor<float>> panels;
  for (int k = 3; k >= 0; --k)
    if (out.merged[k].defined()) panels.push_back(to_panel(out.merged[k]));
  int fk = finest_mask_level(out);
  Tensor<float> per_attr = gen.masks_per_attr(out, fk);
  for (int i = 0; i < n; ++i)
    panels.push_back(to_panel(slice_channels(per_attr, i, 1)));

  Tensor<float> dev = sum_channels(abs(sub(out.image, x)));
  float mx = 0;
  for (float v : dev.values()) mx = std::max(mx, v);
  if (mx > 0) dev = scale(dev, 1.0f / mx);
  panels.push_back(heatmap(reshape(dev, {1, size, size})));

  write_image(path, compose_grid(panels, int(panels.size())), 0.0f, 1.0f,
              stats);
}

uint64_t param_bytes_hash(const ParamStore<float>& ps) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const Tensor<float>& t) {
    auto v = t.values();
    const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(float); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [n, t] : ps.trainable) feed(t);
  for (const auto& [n, t] : ps.buffers) feed(t);
  return h;
}

std::vector<std::string> AblationTable::variants() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.variant) == out.end())
      out.push_back(r.variant);
  return out;
}

double AblationTable::mean(const std::string& variant, bool err) const {
  double s = 0;
  int c = 0;
  for (const auto& r : rows)
    if (r.variant == variant) {
      s += err ? r.error : r.accuracy;
      ++c;
    }
  return c ? s / c : 0.0;
}

double AblationTable::stdev(const std::string& variant, bool err) const {
  double m = mean(variant, err), s = 0;
  int c = 0;
  for (const auto& r : rows)
    if (r.variant == variant) {
      double d = (err ? r.error : r.accuracy) - m;
      s += d * d;
      ++c;
    }
  return c > 1 ? std::sqrt(s / (c - 1)) : 0.0;
}

std::string AblationTable::to_tsv() const {
  std::string out = "variant\tseed\taccuracy\terror_raw\terror_x100\n";
  for (const auto& r : rows)
    out += r.variant + "\t" + std::to_string(r.seed) + "\t" +
           fmt(r.accuracy) + "\t" + fmt(r.error) + "\t" +
           fmt(r.error * 100.0) + "\n";
  out += "#variant\tacc_mean\tacc_std\terr_mean_x100\terr_std_x100\n";
  for (const auto& v : variants())
    out += "# " + v + "\t" + fmt(mean(v, false)) + "\t" +
           fmt(stdev(v, false)) + "\t" + fmt(mean(v, true) * 100.0) + "\t" +
           fmt(stdev(v, true) * 100.0) + "\n";
  return out;
}

AblationTable run_ablations(const AblationConfig& cfg) {
  struct Variant {
    std::string name;
    void (*tweak)(TrainConfig&);
  };
  static const Variant variants[] = {
      {"full", [](TrainConfig&) {}},
      {"no_residual", [](TrainConfig& c) { c.residual_masks = false; }},
      {"single_mask", [](TrainConfig& c) { c.single_mask = true; }},
      {"no_spa", [](TrainConfig& c) { c.w.l_spa = 0.0; }},
      {"no_ovl", [](TrainConfig& c) { c.w.l_ovl = 0.0; }},
      {"steps1", [](TrainConfig& c) { c.steps = 1; }},
      {"steps2", [](TrainConfig& c) { c.steps = 2; }},
      {"steps3", [](TrainConfig& c) { c.steps = 3; }},
  };
  AblationTable table;
  for (uint64_t seed : cfg.seeds) {
    std::string dir = cfg.work_dir + "/seed" + std::to_string(seed);
    std::filesystem::create_directories(dir);
    std::string prefix = dir + "/data";
    auto [train_path, test_path] =
        gen_dataset(cfg.n_train, cfg.n_test, seed, cfg.base.size,
                    cfg.base.n_attrs, prefix);
    Dataset train = read_dataset(train_path);
    Dataset test = read_dataset(test_path);

    ModelConfig pm;
    pm.size = cfg.base.size;
    pm.n_attrs = cfg.base.n_attrs;
    pm.base_c = cfg.base.base_c;
    pm.seed = seed;
    PredictorNet<float> predictor(pm);
    PredictorTrainConfig pc = cfg.predictor;
    pc.size = cfg.base.size;
    pc.n_attrs = cfg.base.n_attrs;
    pc.seed = seed;
    PredictorResult pr = train_predictor(pc, train, test, predictor);
    std::fprintf(stderr, "[ablate] seed %llu predictor accuracy %.4f\n",
                 (unsigned long long)seed, pr.mean_accuracy);

    for (const auto& var : variants) {
      TrainConfig tc = cfg.base;
      tc.seed = seed;
      var.tweak(tc);
      tc.out_dir = dir + "/" + var.name;
      std::filesystem::create_directories(tc.out_dir);
      Trainer trainer(tc, train);
      trainer.run();
      // Reuse the trained instance directly; Trainer owns the live net.
      CheckpointModel model(
          std::shared_ptr<GeneratorNet<float>>(&trainer.generator(),
                                               [](GeneratorNet<float>*) {}));
      EvalReport rep =
          evaluate(model, predictor, test, cfg.predictor_floor,
                   var.name + " seed=" + std::to_string(seed));
      table.rows.push_back(
          {var.name, seed, rep.mean_accuracy, rep.mean_error});
      std::fprintf(stderr, "[ablate] seed %llu %s acc=%.4f err=%.4f\n",
                   (unsigned long long)seed, var.name.c_str(),
                   rep.mean_accuracy, rep.mean_error);
    }
  }
  // A 4-step model is structurally the full model; report it as such.
  std::vector<AblationRow> extra;
  for (const auto& r : table.rows)
    if (r.variant == "full") extra.push_back({"steps4", r.seed, r.accuracy,
                                              r.error});
  table.rows.insert(table.rows.end(), extra.begin(), extra.end());
  return table;
}

}  // namespace attredit
