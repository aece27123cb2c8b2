#pragma once

// Bit-exact 8-bit image output: binary PPM (P6) for [3,H,W] tensors and
// PGM (P5) for [1,H,W]. Values are mapped from a declared [lo,hi] range;
// anything that lands outside after mapping is clamped and counted.

#include <cstdint>
#include <string>
#include <vector>

#include "attredit/tensor.hpp"

namespace attredit {

struct ImageWriteStats {
  int64_t clamped = 0;  // pixels clamped into [0,255] across all writes
};

void write_image(const std::string& path, const Tensor<float>& t, float lo,
                 float hi, ImageWriteStats* stats = nullptr);

// Reads P6/P5 back into [C,H,W] within the declared range; inverse of the
// writer for 8-bit-quantized data.
Tensor<float> read_image(const std::string& path, float lo, float hi);

// Side-by-side composition of same-sized [3,H,W] panels in [0,1], with a
// 1-pixel separator, row-major.
Tensor<float> compose_grid(const std::vector<Tensor<float>>& panels,
                           int cols);

// [1,H,W] in [0,1] replicated to gray RGB.
Tensor<float> gray_to_rgb(const Tensor<float>& t);

// Heat ramp black->red->yellow->white over [0,1], producing [3,H,W].
Tensor<float> heatmap(const Tensor<float>& t);

}  // namespace attredit
