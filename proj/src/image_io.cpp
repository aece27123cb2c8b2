#include "attredit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "attredit/common.hpp"

namespace attredit {

void write_image(const std::string& path, const Tensor<float>& t, float lo,
                 float hi, ImageWriteStats* stats) {
  if (t.ndim() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
    throw FormatError(cat("write_image: shape ", shape_str(t.shape()),
                          ", expected [1,H,W] or [3,H,W]"));
  if (!(hi > lo)) throw FormatError("write_image: empty value range");
  int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(cat("cannot write ", path));
  os << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  auto v = t.values();
  float scale = 255.0f / (hi - lo);
  std::vector<unsigned char> row(size_t(w) * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        float m = std::round((v[(size_t(ch) * h + y) * w + x] - lo) * scale);
        if (m < 0.0f || m > 255.0f) {
          m = std::clamp(m, 0.0f, 255.0f);
          if (stats) ++stats->clamped;
        }
        row[size_t(x) * c + ch] = static_cast<unsigned char>(m);
      }
    os.write(reinterpret_cast<const char*>(row.data()),
             std::streamsize(row.size()));
  }
  if (!os) throw FormatError(cat("write failed on ", path));
}

Tensor<float> read_image(const std::string& path, float lo, float hi) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(cat("cannot read ", path));
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  is >> magic >> w >> h >> maxv;
  if ((magic != "P6" && magic != "P5") || w <= 0 || h <= 0 || maxv != 255)
    throw FormatError(cat(path, ": unsupported image header"));
  is.get();  // single whitespace after header
  int c = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(size_t(w) * h * c);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!is) throw FormatError(cat(path, ": truncated payload"));
  std::vector<float> v(raw.size());
  float scale = (hi - lo) / 255.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        v[(size_t(ch) * h + y) * w + x] =
            lo + float(raw[(size_t(y) * w + x) * c + ch]) * scale;
  return Tensor<float>::from_vec({c, h, w}, std::move(v));
}

Tensor<float> compose_grid(const std::vector<Tensor<float>>& panels,
                           int cols) {
  if (panels.empty() || cols < 1)
    throw FormatError("compose_grid: nothing to compose");
  int h = panels[0].dim(1), w = panels[0].dim(2);
  for (const auto& p : panels)
    if (p.ndim() != 3 || p.dim(0) != 3 || p.dim(1) != h || p.dim(2) != w)
      throw FormatError(cat("compose_grid: panel ", shape_str(p.shape()),
                            " does not match [3,", h, ",", w, "]"));
  int rows = (int(panels.size()) + cols - 1) / cols;
  int gh = rows * h + (rows - 1), gw = cols * w + (cols - 1);
  std::vector<float> v(size_t(3) * gh * gw, 0.5f);  // separator gray
  for (size_t i = 0; i < panels.size(); ++i) {
    int r0 = int(i) / cols * (h + 1), c0 = int(i) % cols * (w + 1);
    auto pv = panels[i].values();
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          v[(size_t(ch) * gh + r0 + y) * gw + c0 + x] =
              pv[(size_t(ch) * h + y) * w + x];
  }
  return Tensor<float>::from_vec({3, gh, gw}, std::move(v));
}

Tensor<float> gray_to_rgb(const Tensor<float>& t) {
  if (t.ndim() != 3 || t.dim(0) != 1)
    throw FormatError(cat("gray_to_rgb: shape ", shape_str(t.shape())));
  int h = t.dim(1), w = t.dim(2);
  std::vector<float> v(size_t(3) * h * w);
  auto s = t.values();
  for (int ch = 0; ch < 3; ++ch)
    for (size_t i = 0; i < size_t(h) * w; ++i) v[size_t(ch) * h * w + i] = s[i];
  return Tensor<float>::from_vec({3, h, w}, std::move(v));
}

Tensor<float> heatmap(const Tensor<float>& t) {
  if (t.ndim() != 3 || t.dim(0) != 1)
    throw FormatError(cat("heatmap: shape ", shape_str(t.shape())));
  int h = t.dim(1), w = t.dim(2);
  std::vector<float> v(size_t(3) * h * w);
  auto s = t.values();
  auto c01 = [](float x) { return std::clamp(x, 0.0f, 1.0f); };
  for (size_t i = 0; i < size_t(h) * w; ++i) {
    float x = c01(s[i]);
    v[i] = c01(3.0f * x);
    v[size_t(h) * w + i] = c01(3.0f * x - 1.0f);
    v[2 * size_t(h) * w + i] = c01(3.0f * x - 2.0f);
  }
  return Tensor<float>::from_vec({3, h, w}, std::move(v));
}

}  // namespace attredit
