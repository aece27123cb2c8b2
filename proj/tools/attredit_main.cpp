// Command-line front end: dataset generation, predictor training, editor
// training, editing/exports, evaluation, and the ablation sweep. Every
// subcommand takes key=value arguments (plus config=FILE for a key=value
// file); precedence is CLI > file > default, and the resolved config is
// printed before work starts. Exit codes: 0 success, 2 usage error,
// 3 data/checkpoint mismatch, 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attredit/config.hpp"
#include "attredit/eval.hpp"
#include "attredit/model_io.hpp"
#include "attredit/synth.hpp"
#include "attredit/train.hpp"

namespace fs = std::filesystem;
using namespace attredit;

namespace {

Config build_config(const std::vector<std::string>& kv) {
  Config cfg;
  // File layer first so later CLI pairs override it.
  for (const auto& item : kv) {
    size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError(cat("expected key=value, got '", item, "'"));
    if (item.substr(0, eq) == "config") cfg.load_file(item.substr(eq + 1));
  }
  for (const auto& item : kv) {
    size_t eq = item.find('=');
    std::string key = item.substr(0, eq);
    if (key != "config") cfg.set_override(key, item.substr(eq + 1));
  }
  return cfg;
}

void finish_config(Config& cfg) {
  auto unknown = cfg.unknown_keys();
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw UsageError(msg);
  }
  cfg.print_resolved(std::cout);
}

void ensure_parent_dir(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

int attr_index_by_name(const std::string& name, int n) {
  for (int i = 0; i < n; ++i)
    if (name == kAttrNames[i]) return i;
  try {
    size_t pos = 0;
    int v = std::stoi(name, &pos);
    if (pos == name.size() && v >= 0 && v < n) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(cat("unknown attribute '", name, "' (have ", n,
                       " attributes)"));
}

// "hat+glasses,mustache" -> {{0,1},{2}}; empty spec -> one empty group
// (the no-op edit).
std::vector<std::vector<int>> parse_attr_spec(const std::string& spec,
                                              int n) {
  std::vector<std::vector<int>> groups;
  if (spec.empty()) {
    groups.emplace_back();
    return groups;
  }
  std::string cur;
  std::vector<std::string> parts;
  for (char c : spec + ",") {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  for (const auto& part : parts) {
    std::vector<int> group;
    std::string name;
    for (char c : part + "+") {
      if (c == '+') {
        if (!name.empty()) group.push_back(attr_index_by_name(name, n));
        name.clear();
      } else {
        name += c;
      }
    }
    groups.push_back(group);
  }
  return groups;
}

struct LoadedEditor {
  ModelConfig cfg;
  std::shared_ptr<GeneratorNet<float>> gen;
  std::shared_ptr<CriticNet<float>> critic;
};

LoadedEditor load_editor(const std::string& path) {
  ParamFile pf = read_params(path);
  auto it = pf.meta.find("kind");
  if (it == pf.meta.end() || it->second != "editor")
    throw FormatError(cat(path, ": not an editor checkpoint"));
  LoadedEditor e;
  e.cfg = config_from_meta(pf);
  e.gen = std::make_shared<GeneratorNet<float>>(e.cfg);
  e.critic = std::make_shared<CriticNet<float>>(e.cfg);
  restore_editor(pf, *e.gen, *e.critic);
  return e;
}

std::shared_ptr<PredictorNet<float>> load_predictor(const std::string& path) {
  ParamFile pf = read_params(path);
  auto it = pf.meta.find("kind");
  if (it == pf.meta.end() || it->second != "predictor")
    throw FormatError(cat(path, ": not a predictor checkpoint"));
  auto net = std::make_shared<PredictorNet<float>>(config_from_meta(pf));
  restore_predictor(pf, *net);
  return net;
}

void require_match(const ModelConfig& ckpt, const Dataset& ds,
                   const std::string& what) {
  if (ckpt.size != ds.size || ckpt.n_attrs != ds.n)
    throw FormatError(cat(what, " mismatch: checkpoint size=", ckpt.size,
                          " n=", ckpt.n_attrs, " C=", ckpt.base_c,
                          ", dataset size=", ds.size, " n=", ds.n));
}

TrainConfig train_config_from(Config& c) {
  TrainConfig tc;
  tc.size = int(c.geti("size", 32));
  tc.base_c = int(c.geti("C", 16));
  tc.n_attrs = int(c.geti("n", 4));
  tc.batch_size = int(c.geti("batch_size", 32));
  tc.n_critic = int(c.geti("n_critic", 5));
  tc.total_g_steps = c.geti("total_g_steps", 20000);
  tc.ckpt_every = c.geti("ckpt_every", 5000);
  tc.lr = c.getd("lr", 2e-4);
  tc.beta1 = c.getd("beta1", 0.5);
  tc.beta2 = c.getd("beta2", 0.999);
  tc.adam_eps = c.getd("adam_eps", 1e-8);
  tc.w.l_att = c.getd("lambda_att", 20.0);
  tc.w.l_adv = c.getd("lambda_adv", 1.0);
  tc.w.l_spa = c.getd("lambda_spa", 0.05);
  tc.w.l_ovl = c.getd("lambda_ovl", 1.0);
  tc.w.l_cls = c.getd("lambda_cls", 1.0);
  tc.w.l_gap = c.getd("lambda_gap", 1.0);
  tc.w.l_lp = c.getd("lambda_lp", 10.0);
  tc.seed = c.getu("seed", 1);
  tc.steps = int(c.geti("steps", 4));
  tc.residual_masks = c.getb("residual_masks", true);
  tc.single_mask = c.getb("single_mask", false);
  tc.clamp_masks = c.getb("clamp_masks", true);
  tc.mask_head_zero_init = c.getb("mask_head_zero_init", true);
  tc.overlap_gated = c.getb("overlap_gated", false);
  tc.adv_g_literal = c.getb("adv_g_literal", false);
  tc.out_dir = c.gets("out_dir", "run");
  return tc;
}

int cmd_gen_data(Config& c) {
  int size = int(c.geti("size", 32));
  int n = int(c.geti("n", 4));
  int n_train = int(c.geti("n_train", 8000));
  int n_test = int(c.geti("n_test", 2000));
  uint64_t seed = c.getu("seed", 7);
  std::string out = c.gets("out", "data/glyphs");
  finish_config(c);
  ensure_parent_dir(out + "-train.bin");
  auto [train_path, test_path] = gen_dataset(n_train, n_test, seed, size, n,
                                             out);
  std::cout << "wrote " << train_path << " (" << n_train << " samples)\n";
  std::cout << "wrote " << test_path << " (" << n_test << " samples)\n";
  std::cout << "wrote " << out << "-manifest.txt\n";
  return 0;
}

int cmd_train_predictor(Config& c) {
  std::string data = c.gets("data", "data/glyphs");
  std::string out = c.gets("out", "predictor.bin");
  PredictorTrainConfig pc;
  pc.batch_size = int(c.geti("batch_size", 64));
  pc.epochs = int(c.geti("epochs", 12));
  pc.lr = c.getd("lr", 1e-3);
  pc.seed = c.getu("seed", 1);
  double floor = c.getd("floor", 0.98);
  finish_config(c);

  Dataset train = read_dataset(data + "-train.bin");
  Dataset test = read_dataset(data + "-test.bin");
  pc.size = train.size;
  pc.n_attrs = train.n;
  ModelConfig mc;
  mc.size = train.size;
  mc.n_attrs = train.n;
  mc.seed = pc.seed;
  PredictorNet<float> net(mc);
  PredictorResult res = train_predictor(pc, train, test, net);
  for (int i = 0; i < train.n; ++i)
    std::cout << "attr " << i << " (" << kAttrNames[i]
              << ") test accuracy " << res.test_accuracy[i] << "\n";
  std::cout << "mean test accuracy " << res.mean_accuracy << "\n";
  bool below = false;
  for (double a : res.test_accuracy) below = below || a < floor;
  if (below)
    std::cerr << "warning: accuracy below floor " << floor
              << "; evaluation will refuse this predictor\n";
  ensure_parent_dir(out);
  ParamFile pf = snapshot_predictor(net);
  pf.meta["test_accuracy"] = std::to_string(res.mean_accuracy);
  write_params(pf, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train(Config& c) {
  TrainConfig tc = train_config_from(c);
  std::string data = c.gets("data", "data/glyphs");
  std::string resume = c.gets("resume", "");
  finish_config(c);
  Dataset train = read_dataset(data + "-train.bin");
  fs::create_directories(tc.out_dir);
  Trainer trainer(tc, train);
  if (!resume.empty()) trainer.resume(resume);
  std::string final_path = trainer.run();
  std::cout << "wrote " << final_path << "\n";
  return 0;
}

int cmd_edit(Config& c) {
  std::string ckpt = c.gets("checkpoint", "run/ckpt-final.bin");
  std::string data = c.gets("data", "data/glyphs");
  std::string spec = c.gets("attrs", "");
  int rows = int(c.geti("rows", 8));
  std::string out = c.gets("out", "edit.ppm");
  finish_config(c);

  LoadedEditor e = load_editor(ckpt);
  Dataset test = read_dataset(data + "-test.bin");
  require_match(e.cfg, test, "edit");
  rows = std::min(rows, test.count());
  if (rows < 1) throw FormatError("edit: empty test split");
  auto groups = parse_attr_spec(spec, test.n);

  NoGradGuard ng;
  std::vector<Tensor<float>> panels;
  ImageWriteStats stats;
  for (int r = 0; r < rows; ++r) {
    std::vector<int> idx{r};
    Tensor<float> x = batch_images<float>(test, idx);
    Tensor<float> a = batch_attrs<float>(test, idx);
    auto x_panel = scale(add_scalar(reshape(x, {3, test.size, test.size}),
                                    1.0f),
                         0.5f);
    panels.push_back(x_panel);
    std::vector<Tensor<float>> devs;
    for (const auto& group : groups) {
      std::vector<std::vector<uint8_t>> tgt{test.samples[r].attrs};
      for (int gi : group) tgt[0][gi] ^= 1;
      Tensor<float> b = batch_attrs<float>(test, idx);
      auto bv = b.values();
      for (int j = 0; j < test.n; ++j) bv[j] = float(tgt[0][j]);
      Tensor<float> y = e.gen->forward(x, a, b, /*train=*/false).image;
      panels.push_back(scale(
          add_scalar(reshape(y, {3, test.size, test.size}), 1.0f), 0.5f));
      Tensor<float> dev = sum_channels(abs(sub(y, x)));
      float mx = 0;
      for (float v : dev.values()) mx = std::max(mx, v);
      if (mx > 0) dev = scale(dev, 1.0f / mx);
      devs.push_back(heatmap(reshape(dev, {1, test.size, test.size})));
    }
    for (auto& d : devs) panels.push_back(d);
  }
  int cols = 1 + 2 * int(groups.size());
  ensure_parent_dir(out);
  write_image(out, compose_grid(panels, cols), 0.0f, 1.0f, &stats);
  std::cout << "wrote " << out << " (" << rows << " rows x " << cols
            << " columns)\n";
  if (stats.clamped)
    std::cerr << "warning: " << stats.clamped
              << " pixel values clamped during export\n";
  return 0;
}

int cmd_eval(Config& c) {
  std::string ckpt = c.gets("checkpoint", "run/ckpt-final.bin");
  std::string pred_path = c.gets("predictor", "predictor.bin");
  std::string data = c.gets("data", "data/glyphs");
  std::string model_kind = c.gets("model", "checkpoint");
  std::string manifest = c.gets("manifest", data + "-manifest.txt");
  double floor = c.getd("floor", 0.98);
  std::string out = c.gets("out", "");
  finish_config(c);

  Dataset test = read_dataset(data + "-test.bin");
  auto predictor = load_predictor(pred_path);
  require_match(predictor->config(), test, "eval predictor");

  std::unique_ptr<EditModel> model;
  std::string echo;
  if (model_kind == "checkpoint") {
    LoadedEditor e = load_editor(ckpt);
    require_match(e.cfg, test, "eval");
    echo = cat("checkpoint=", ckpt, " size=", e.cfg.size, " C=",
               e.cfg.base_c, " n=", e.cfg.n_attrs);
    model = std::make_unique<CheckpointModel>(e.gen);
  } else if (model_kind == "identity") {
    model = std::make_unique<IdentityModel>();
  } else if (model_kind == "oracle") {
    Manifest m = read_manifest(manifest);
    if (m.size != test.size || m.n != test.n ||
        int(m.test_seeds.size()) != test.count())
      throw FormatError(cat(manifest, " does not describe ", data,
                            "-test.bin"));
    model = std::make_unique<OracleModel>(m.test_seeds);
  } else {
    throw UsageError(cat("model=", model_kind,
                         " (want checkpoint|identity|oracle)"));
  }
  EvalReport rep = evaluate(*model, *predictor, test, floor, echo);
  std::string tsv = rep.to_tsv();
  std::cout << tsv;
  if (!out.empty()) {
    ensure_parent_dir(out);
    std::ofstream os(out, std::ios::binary);
    os << tsv;
    if (!os) throw FormatError(cat("cannot write ", out));
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_ablate(Config& c) {
  AblationConfig ac;
  ac.base = train_config_from(c);
  ac.n_train = int(c.geti("n_train", 2000));
  ac.n_test = int(c.geti("n_test", 500));
  ac.work_dir = c.gets("work_dir", "ablations");
  ac.predictor_floor = c.getd("floor", 0.98);
  ac.predictor.epochs = int(c.geti("predictor_epochs", 12));
  ac.predictor.batch_size = int(c.geti("predictor_batch_size", 64));
  std::string seeds = c.gets("seeds", "1,2,3");
  std::string out = c.gets("out", "ablations/report.tsv");
  finish_config(c);

  ac.seeds.clear();
  std::string cur;
  for (char ch : seeds + ",") {
    if (ch == ',') {
      if (!cur.empty()) ac.seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (ac.seeds.empty()) throw UsageError("seeds= must name at least one seed");
  fs::create_directories(ac.work_dir);
  AblationTable table = run_ablations(ac);
  std::string tsv = table.to_tsv();
  std::cout << tsv;
  ensure_parent_dir(out);
  std::ofstream os(out, std::ios::binary);
  os << tsv;
  if (!os) throw FormatError(cat("cannot write ", out));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_export_masks(Config& c) {
  std::string ckpt = c.gets("checkpoint", "run/ckpt-final.bin");
  std::string data = c.gets("data", "data/glyphs");
  int index = int(c.geti("index", 0));
  std::string spec = c.gets("attrs", "");
  std::string out = c.gets("out", "masks.ppm");
  finish_config(c);

  LoadedEditor e = load_editor(ckpt);
  Dataset test = read_dataset(data + "-test.bin");
  require_match(e.cfg, test, "export-masks");
  if (index < 0 || index >= test.count())
    throw FormatError(cat("index ", index, " out of ", test.count(),
                          " samples"));
  auto groups = parse_attr_spec(spec, test.n);
  std::vector<uint8_t> target = test.samples[index].attrs;
  for (int gi : groups[0]) target[gi] ^= 1;
  ImageWriteStats stats;
  ensure_parent_dir(out);
  export_masks(*e.gen, test.samples[index], target, out, &stats);
  std::cout << "wrote " << out << "\n";
  if (stats.clamped)
    std::cerr << "warning: " << stats.clamped
              << " pixel values clamped during export\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyph-face attribute editor"};
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* desc;
    int (*fn)(Config&);
    CLI::App* cmd = nullptr;
    std::vector<std::string> kv;
  };
  Sub subs[] = {
      {"gen-data", "generate a synthetic glyph-face dataset", cmd_gen_data},
      {"train-predictor", "train the evaluation attribute predictor",
       cmd_train_predictor},
      {"train", "train the attribute editor", cmd_train},
      {"edit", "edit test images and write an image grid", cmd_edit},
      {"eval", "editing accuracy and preservation error", cmd_eval},
      {"ablate", "train and evaluate all model variants", cmd_ablate},
      {"export-masks", "export mask levels and deviation map",
       cmd_export_masks},
  };
  for (auto& s : subs) {
    s.cmd = app.add_subcommand(s.name, s.desc);
    s.cmd->add_option("args", s.kv, "key=value settings (config=FILE loads a file)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }
  try {
    for (auto& s : subs)
      if (s.cmd->parsed()) {
        Config cfg = build_config(s.kv);
        return s.fn(cfg);
      }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
