#pragma once

// Snapshot/restore glue between the parameter file container and the
// concrete models. Blob names are "<prefix>.<store name>"; the editor
// checkpoint holds generator and critic side by side, the predictor lives
// in its own file. Variant knobs travel in the metadata section so a
// loaded model always reconstructs the exact architecture it was saved
// from.

#include <cstring>
#include <string>

#include "attredit/checkpoint.hpp"
#include "attredit/nets.hpp"

namespace attredit {

inline void store_to_file(ParamFile& pf, const std::string& prefix,
                          const ParamStore<float>& ps) {
  for (const auto& [n, t] : ps.trainable) pf.blobs.emplace_back(prefix + n, t);
  for (const auto& [n, t] : ps.buffers) pf.blobs.emplace_back(prefix + n, t);
}

inline void file_to_store(const ParamFile& pf, const std::string& prefix,
                          ParamStore<float>& ps) {
  auto copy_into = [&](const std::string& name, Tensor<float>& dst) {
    const Tensor<float>* src = pf.find(prefix + name);
    if (!src) throw FormatError(cat("checkpoint missing blob ", prefix, name));
    if (src->shape() != dst.shape())
      throw FormatError(cat("checkpoint blob ", prefix, name, " shape ",
                            shape_str(src->shape()), " expected ",
                            shape_str(dst.shape())));
    std::memcpy(dst.values().data(), src->values().data(),
                sizeof(float) * size_t(dst.numel()));
  };
  for (auto& [n, t] : ps.trainable) copy_into(n, t);
  for (auto& [n, t] : ps.buffers) copy_into(n, t);
}

inline void config_to_meta(const ModelConfig& cfg, ParamFile& pf) {
  pf.size = cfg.size;
  pf.base_c = cfg.base_c;
  pf.n_attrs = cfg.n_attrs;
  pf.seed = cfg.seed;
  pf.meta["steps"] = std::to_string(cfg.steps);
  pf.meta["residual_masks"] = cfg.residual_masks ? "1" : "0";
  pf.meta["single_mask"] = cfg.single_mask ? "1" : "0";
  pf.meta["clamp_masks"] = cfg.clamp_masks ? "1" : "0";
  pf.meta["mask_head_zero_init"] = cfg.mask_head_zero_init ? "1" : "0";
}

inline ModelConfig config_from_meta(const ParamFile& pf) {
  ModelConfig cfg;
  cfg.size = pf.size;
  cfg.base_c = pf.base_c;
  cfg.n_attrs = pf.n_attrs;
  cfg.seed = pf.seed;
  auto get = [&](const char* k, const std::string& dflt) {
    auto it = pf.meta.find(k);
    return it == pf.meta.end() ? dflt : it->second;
  };
  cfg.steps = std::stoi(get("steps", "4"));
  cfg.residual_masks = get("residual_masks", "1") == "1";
  cfg.single_mask = get("single_mask", "0") == "1";
  cfg.clamp_masks = get("clamp_masks", "1") == "1";
  cfg.mask_head_zero_init = get("mask_head_zero_init", "1") == "1";
  return cfg;
}

inline ParamFile snapshot_editor(const GeneratorNet<float>& g,
                                 const CriticNet<float>& dc) {
  ParamFile pf;
  config_to_meta(g.config(), pf);
  pf.meta["kind"] = "editor";
  store_to_file(pf, "g.", g.store());
  store_to_file(pf, "dc.", dc.store());
  return pf;
}

inline void restore_editor(const ParamFile& pf, GeneratorNet<float>& g,
                           CriticNet<float>& dc) {
  file_to_store(pf, "g.", g.store());
  file_to_store(pf, "dc.", dc.store());
}

inline ParamFile snapshot_predictor(const PredictorNet<float>& p) {
  ParamFile pf;
  config_to_meta(p.config(), pf);
  pf.meta["kind"] = "predictor";
  store_to_file(pf, "p.", p.store());
  return pf;
}

inline void restore_predictor(const ParamFile& pf, PredictorNet<float>& p) {
  file_to_store(pf, "p.", p.store());
}

}  // namespace attredit
