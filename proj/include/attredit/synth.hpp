#pragma once

// Procedural glyph-face corpus: deterministic renderer, binary on-disk
// dataset, and the fixed attribute-irrelevant regions used by evaluation.
//
// Attribute kinds (index order is part of the format):
//   0 hat       bright band across the top of the canvas
//   1 glasses   two dark boxes with a bridge, over the eyes
//   2 mustache  dark bar between nose height and the mouth
//   3 pale_face face-disc pixels lightened toward white
//
// Renders are layered background, face disc, pale lightening, eyes, mouth,
// mustache, glasses, hat. Each attribute paints only inside its own
// footprint, footprints of pairs declared disjoint never overlap, and the
// pale lightening skips every other canonical footprint plus the eyes and
// mouth, so flipping any single attribute bit changes pixels only inside
// that attribute's region.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attredit/common.hpp"
#include "attredit/tensor.hpp"

namespace attredit {

inline constexpr int kMaxAttrs = 4;
inline const char* kAttrNames[kMaxAttrs] = {"hat", "glasses", "mustache",
                                            "pale_face"};

struct SynthSample {
  int size = 0;
  int n = 0;
  uint64_t seed = 0;
  std::vector<float> image;                  // [3,size,size], values [-1,1]
  std::vector<uint8_t> attrs;                // n values in {0,1}
  std::vector<std::vector<uint8_t>> regions; // n masks [size*size], {0,1}
};

struct Dataset {
  int size = 0;
  int n = 0;
  std::vector<SynthSample> samples;

  int count() const { return int(samples.size()); }
};

// Deterministic render; attrs.size() selects how many attribute kinds are
// active (1..4, always taken in index order). Throws on unsupported size.
SynthSample render_sample(uint64_t seed, const std::vector<uint8_t>& attrs,
                          int size);

// Pairs of attributes whose footprints never overlap, restricted to the
// first n attributes.
std::vector<std::pair<int, int>> disjoint_pairs(int n);

// Complement of the attribute's canonical footprint dilated by 2 pixels
// (square structuring element). {0,1} mask of size*size bytes.
std::vector<uint8_t> irrelevant_region(int attr_index, int size);

// Pixel <-> byte mapping used by the on-disk format.
uint8_t quantize_px(float v);
float dequantize_px(uint8_t b);

// Writes one split to `path` (magic "AEDS1"; little-endian u32 size, n,
// count; per record size*size*3 image bytes, one attribute byte, n
// row-major 1 bit/pixel region bitmaps).
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Renders n_train + n_test samples from disjoint seed streams with
// Bernoulli(0.5) attributes and writes <prefix>-train.bin,
// <prefix>-test.bin and <prefix>-manifest.txt. Returns the two file paths.
std::pair<std::string, std::string> gen_dataset(int n_train, int n_test,
                                                uint64_t seed, int size,
                                                int n_attrs,
                                                const std::string& prefix);

// Sidecar manifest: per-sample render seeds for both splits. Needed by the
// re-rendering oracle, which must reproduce a stored sample exactly.
struct Manifest {
  uint64_t master_seed = 0;
  int size = 0;
  int n = 0;
  std::vector<uint64_t> train_seeds, test_seeds;
};
Manifest read_manifest(const std::string& path);

// Batch assembly for training: images as [N,3,H,W], attributes as [N,n].
template <typename S>
Tensor<S> batch_images(const Dataset& ds, const std::vector<int>& idx) {
  int hw = ds.size * ds.size * 3;
  std::vector<S> v(size_t(idx.size()) * hw);
  for (size_t i = 0; i < idx.size(); ++i) {
    const auto& img = ds.samples[idx[i]].image;
    for (int j = 0; j < hw; ++j) v[i * hw + j] = S(img[j]);
  }
  return Tensor<S>::from_vec({int(idx.size()), 3, ds.size, ds.size},
                             std::move(v));
}

template <typename S>
Tensor<S> batch_attrs(const Dataset& ds, const std::vector<int>& idx) {
  std::vector<S> v(idx.size() * ds.n);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < ds.n; ++j)
      v[i * ds.n + j] = S(ds.samples[idx[i]].attrs[j]);
  return Tensor<S>::from_vec({int(idx.size()), ds.n}, std::move(v));
}

}  // namespace attredit
