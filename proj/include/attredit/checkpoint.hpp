#pragma once

// On-disk model snapshots and the training-state sidecar that makes a
// resumed run bit-identical to an uninterrupted one.
//
// Parameter file ("AEPM1"): header echoing the model config, a string
// key/value metadata section for variant knobs, then named float blobs
// (trainable parameters and running statistics) with explicit shapes,
// little-endian throughout.
//
// State sidecar ("AETS1"): step counters, every RNG stream's state, the
// data cursor, and both optimizers' moment vectors in parameter order,
// guarded by a name hash so a mismatched model is rejected.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attredit/common.hpp"
#include "attredit/tensor.hpp"

namespace attredit {

struct ParamFile {
  int size = 0, base_c = 0, n_attrs = 0;
  uint64_t seed = 0;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> blobs;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : blobs)
      if (n == name) return &t;
    return nullptr;
  }
};

void write_params(const ParamFile& pf, const std::string& path);
ParamFile read_params(const std::string& path);

struct AdamState {
  uint64_t t = 0;
  std::vector<std::vector<float>> m, v;  // one entry per parameter, in order
};

struct TrainState {
  uint64_t g_step = 0;       // completed generator updates
  uint64_t dc_step = 0;      // completed critic/classifier updates
  uint64_t epoch = 0;        // completed passes over the shuffled train set
  uint64_t cursor = 0;       // next index within the current epoch order
  uint64_t data_rng = 0;     // shuffle stream state
  uint64_t target_rng = 0;   // target-attribute stream state
  uint64_t mix_rng = 0;      // gradient-penalty interpolation stream state
  uint64_t name_hash = 0;    // hash of the parameter name list
  AdamState adam_g, adam_dc;
};

void write_train_state(const TrainState& ts, const std::string& path);
TrainState read_train_state(const std::string& path);

// FNV-1a over the concatenated parameter names; guards moment/parameter
// alignment on resume.
uint64_t name_list_hash(const std::vector<std::string>& names);

}  // namespace attredit
