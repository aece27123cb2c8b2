#include "attredit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "attredit/rng.hpp"

namespace attredit {
namespace {

struct Box {
  int r0, r1, c0, c1;  // half-open pixel ranges

  bool contains(int r, int c) const {
    return r >= r0 && r < r1 && c >= c0 && c < c1;
  }
};

// Canonical layout in pixels; u = size/16 scales the logical 16x16 plan.
Box hat_canon(int u) { return {1 * u, 5 * u, 3 * u, 13 * u}; }
Box glasses_canon(int u) { return {6 * u, 9 * u, 4 * u, 12 * u}; }
Box mustache_canon(int u) { return {10 * u, 12 * u, 5 * u, 11 * u}; }
Box eye_left(int u) { return {7 * u, 8 * u, 5 * u, 6 * u}; }
Box eye_right(int u) { return {7 * u, 8 * u, 10 * u, 11 * u}; }
Box mouth_box(int u) { return {12 * u, 13 * u, 6 * u, 10 * u}; }

// Widest disc any jitter can produce, used for the canonical pale footprint.
bool disc_canon_px(int r, int c, int u) {
  double dy = r + 0.5 - 9.5 * u, dx = c + 0.5 - 8.0 * u;
  double rad = 6.5 * u;
  return dy * dy + dx * dx <= rad * rad;
}

void fill_box(std::vector<uint8_t>& m, int size, const Box& b) {
  for (int r = b.r0; r < b.r1; ++r)
    for (int c = b.c0; c < b.c1; ++c) m[size_t(r) * size + c] = 1;
}

struct Color {
  float v[3];
};

Color jittered(std::initializer_list<float> base, Rng& rng, float amp) {
  Color c{};
  int i = 0;
  for (float b : base) c.v[i++] = b + float(rng.uniform(-amp, amp));
  return c;
}

void paint(std::vector<float>& img, int size, int r, int c, const Color& col) {
  for (int ch = 0; ch < 3; ++ch) {
    float v = std::clamp(col.v[ch], -1.0f, 1.0f);
    img[(size_t(ch) * size + r) * size + c] = v;
  }
}

void paint_mask(std::vector<float>& img, int size,
                const std::vector<uint8_t>& m, const Color& col) {
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (m[size_t(r) * size + c]) paint(img, size, r, c, col);
}

std::vector<uint8_t> dilate(const std::vector<uint8_t>& m, int size, int by) {
  std::vector<uint8_t> out(m.size(), 0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      if (!m[size_t(r) * size + c]) continue;
      for (int dr = -by; dr <= by; ++dr)
        for (int dc = -by; dc <= by; ++dc) {
          int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < size && cc >= 0 && cc < size)
            out[size_t(rr) * size + cc] = 1;
        }
    }
  return out;
}

void check_size(int size) {
  if (size != 16 && size != 32)
    throw FormatError(cat("glyph renderer supports sizes 16 and 32, got ",
                          size));
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

uint8_t quantize_px(float v) {
  float q = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return uint8_t(std::clamp(q, 0.0f, 255.0f));
}

float dequantize_px(uint8_t b) { return float(b) / 127.5f - 1.0f; }

std::vector<std::pair<int, int>> disjoint_pairs(int n) {
  static const std::pair<int, int> all[] = {{0, 2}, {0, 1}, {1, 2}};
  std::vector<std::pair<int, int>> out;
  for (auto [i, j] : all)
    if (i < n && j < n) out.emplace_back(i, j);
  return out;
}

SynthSample render_sample(uint64_t seed, const std::vector<uint8_t>& attrs,
                          int size) {
  check_size(size);
  int n = int(attrs.size());
  if (n < 1 || n > kMaxAttrs)
    throw FormatError(cat("render_sample: ", n, " attributes, supported 1..",
                          kMaxAttrs));
  for (uint8_t a : attrs)
    if (a > 1) throw FormatError("render_sample: attribute bits must be 0/1");

  int u = size / 16;
  Rng rng(seed);

  // Style and geometry draws happen unconditionally and in fixed order so
  // the layout never depends on which attributes are switched on.
  Color bg = jittered({-0.80f, -0.72f, -0.62f}, rng, 0.06f);
  Color face = jittered({0.45f, 0.18f, -0.08f}, rng, 0.10f);
  static const float hat_bases[3][3] = {{0.85f, -0.25f, -0.25f},
                                        {-0.15f, 0.75f, -0.05f},
                                        {0.85f, 0.70f, -0.35f}};
  const float* hb = hat_bases[rng.below(3)];
  Color hat = jittered({hb[0], hb[1], hb[2]}, rng, 0.08f);
  float glass_gray = -0.70f + float(rng.uniform(-0.06, 0.06));
  Color glasses{{glass_gray, glass_gray, glass_gray}};
  Color mustache = jittered({0.05f, -0.40f, -0.62f}, rng, 0.05f);
  float eye_gray = -0.86f + float(rng.uniform(-0.04, 0.04));
  Color eyes{{eye_gray, eye_gray, eye_gray - 0.04f}};
  Color mouth = jittered({0.35f, -0.55f, -0.55f}, rng, 0.05f);
  float pale_t = 0.50f + float(rng.uniform(0.0, 0.10));

  double cy = 9.5 * u + rng.uniform(-0.5 * u, 0.5 * u);
  double cx = 8.0 * u + rng.uniform(-0.5 * u, 0.5 * u);
  double rad = 5.0 * u + rng.uniform(0.0, 0.5 * u);
  int hat_jr = int(rng.below(u + 1));
  int hat_jl = int(rng.below(u + 1));
  int hat_jx = int(rng.below(u + 1));
  int gl_jr = int(rng.below(u + 1));
  int gl_jc = int(rng.below(u + 1));
  int mu_jr = int(rng.below(u + 1));
  int mu_jl = int(rng.below(u + 1));
  int mu_jx = int(rng.below(u + 1));

  Box hat_draw{1 * u + hat_jr, 1 * u + hat_jr + 3 * u, 3 * u + hat_jl,
               13 * u - hat_jx};
  Box gl_left{6 * u + gl_jr, 6 * u + gl_jr + 2 * u, 4 * u + gl_jc,
              6 * u + gl_jc};
  Box gl_right{6 * u + gl_jr, 6 * u + gl_jr + 2 * u, 9 * u + gl_jc,
               11 * u + gl_jc};
  Box gl_bridge{6 * u + gl_jr, 6 * u + gl_jr + 1, 6 * u + gl_jc,
                9 * u + gl_jc};
  Box mu_draw{10 * u + mu_jr, 11 * u + mu_jr, 5 * u + mu_jl, 11 * u - mu_jx};

  size_t px = size_t(size) * size;
  std::vector<uint8_t> disc(px, 0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double dy = r + 0.5 - cy, dx = c + 0.5 - cx;
      if (dy * dy + dx * dx <= rad * rad) disc[size_t(r) * size + c] = 1;
    }

  SynthSample s;
  s.size = size;
  s.n = n;
  s.seed = seed;
  s.attrs = attrs;
  s.regions.assign(n, std::vector<uint8_t>(px, 0));

  fill_box(s.regions[0], size, hat_draw);
  if (n > 1) {
    fill_box(s.regions[1], size, gl_left);
    fill_box(s.regions[1], size, gl_right);
    fill_box(s.regions[1], size, gl_bridge);
  }
  if (n > 2) fill_box(s.regions[2], size, mu_draw);
  if (n > 3) {
    Box hc = hat_canon(u), gc = glasses_canon(u), mc = mustache_canon(u);
    Box el = eye_left(u), er = eye_right(u), mo = mouth_box(u);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        if (!disc[size_t(r) * size + c]) continue;
        if (hc.contains(r, c) || gc.contains(r, c) || mc.contains(r, c) ||
            el.contains(r, c) || er.contains(r, c) || mo.contains(r, c))
          continue;
        s.regions[3][size_t(r) * size + c] = 1;
      }
  }

  s.image.assign(px * 3, 0.0f);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) paint(s.image, size, r, c, bg);
  paint_mask(s.image, size, disc, face);
  if (n > 3 && attrs[3]) {
    Color pale{};
    for (int ch = 0; ch < 3; ++ch)
      pale.v[ch] = face.v[ch] + (1.0f - face.v[ch]) * pale_t;
    paint_mask(s.image, size, s.regions[3], pale);
  }
  Box el = eye_left(u), er = eye_right(u), mo = mouth_box(u);
  for (int r = el.r0; r < el.r1; ++r)
    for (int c = el.c0; c < el.c1; ++c) paint(s.image, size, r, c, eyes);
  for (int r = er.r0; r < er.r1; ++r)
    for (int c = er.c0; c < er.c1; ++c) paint(s.image, size, r, c, eyes);
  for (int r = mo.r0; r < mo.r1; ++r)
    for (int c = mo.c0; c < mo.c1; ++c) paint(s.image, size, r, c, mouth);
  if (n > 2 && attrs[2]) paint_mask(s.image, size, s.regions[2], mustache);
  if (n > 1 && attrs[1]) paint_mask(s.image, size, s.regions[1], glasses);
  if (attrs[0]) paint_mask(s.image, size, s.regions[0], hat);
  return s;
}

std::vector<uint8_t> irrelevant_region(int attr_index, int size) {
  check_size(size);
  if (attr_index < 0 || attr_index >= kMaxAttrs)
    throw FormatError(cat("irrelevant_region: attribute ", attr_index,
                          " out of range 0..", kMaxAttrs - 1));
  int u = size / 16;
  size_t px = size_t(size) * size;
  std::vector<uint8_t> canon(px, 0);
  switch (attr_index) {
    case 0: fill_box(canon, size, hat_canon(u)); break;
    case 1: fill_box(canon, size, glasses_canon(u)); break;
    case 2: fill_box(canon, size, mustache_canon(u)); break;
    case 3:
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          if (disc_canon_px(r, c, u)) canon[size_t(r) * size + c] = 1;
      break;
  }
  std::vector<uint8_t> grown = dilate(canon, size, 2);
  for (auto& v : grown) v = v ? 0 : 1;
  return grown;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(cat("cannot write ", path));
  os.write("AEDS1", 5);
  put_u32(os, uint32_t(ds.size));
  put_u32(os, uint32_t(ds.n));
  put_u32(os, uint32_t(ds.samples.size()));
  size_t px = size_t(ds.size) * ds.size;
  std::vector<uint8_t> buf;
  for (const auto& s : ds.samples) {
    if (s.size != ds.size || int(s.attrs.size()) != ds.n)
      throw FormatError("write_dataset: sample does not match header");
    buf.assign(px * 3, 0);
    for (size_t i = 0; i < px * 3; ++i) buf[i] = quantize_px(s.image[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
    uint8_t ab = 0;
    for (int i = 0; i < ds.n; ++i) ab |= uint8_t(s.attrs[i] ? 1 : 0) << i;
    os.write(reinterpret_cast<const char*>(&ab), 1);
    buf.assign(px / 8, 0);
    for (int i = 0; i < ds.n; ++i) {
      std::fill(buf.begin(), buf.end(), 0);
      for (size_t j = 0; j < px; ++j)
        if (s.regions[i][j]) buf[j / 8] |= uint8_t(1u << (j % 8));
      os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
    }
  }
  if (!os) throw FormatError(cat("write failed on ", path));
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(cat("cannot read ", path));
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "AEDS1", 5) != 0)
    throw FormatError(cat(path, ": not a glyph dataset file"));
  Dataset ds;
  ds.size = int(get_u32(is));
  ds.n = int(get_u32(is));
  uint32_t count = get_u32(is);
  check_size(ds.size);
  if (ds.n < 1 || ds.n > kMaxAttrs)
    throw FormatError(cat(path, ": bad attribute count ", ds.n));
  size_t px = size_t(ds.size) * ds.size;
  std::vector<uint8_t> buf(px * 3);
  std::vector<uint8_t> bits(px / 8);
  ds.samples.resize(count);
  for (uint32_t r = 0; r < count; ++r) {
    SynthSample& s = ds.samples[r];
    s.size = ds.size;
    s.n = ds.n;
    is.read(reinterpret_cast<char*>(buf.data()), buf.size());
    s.image.resize(px * 3);
    for (size_t i = 0; i < px * 3; ++i) s.image[i] = dequantize_px(buf[i]);
    uint8_t ab = 0;
    is.read(reinterpret_cast<char*>(&ab), 1);
    s.attrs.resize(ds.n);
    for (int i = 0; i < ds.n; ++i) s.attrs[i] = (ab >> i) & 1;
    s.regions.assign(ds.n, std::vector<uint8_t>(px, 0));
    for (int i = 0; i < ds.n; ++i) {
      is.read(reinterpret_cast<char*>(bits.data()), bits.size());
      for (size_t j = 0; j < px; ++j)
        s.regions[i][j] = (bits[j / 8] >> (j % 8)) & 1;
    }
    if (!is) throw FormatError(cat(path, ": truncated at record ", r));
  }
  return ds;
}

std::pair<std::string, std::string> gen_dataset(int n_train, int n_test,
                                                uint64_t seed, int size,
                                                int n_attrs,
                                                const std::string& prefix) {
  check_size(size);
  if (n_attrs < 1 || n_attrs > kMaxAttrs)
    throw FormatError(cat("gen_dataset: bad attribute count ", n_attrs));
  Rng master(seed);
  Rng streams[2] = {master.fork(1), master.fork(2)};
  int counts[2] = {n_train, n_test};
  std::string paths[2] = {prefix + "-train.bin", prefix + "-test.bin"};
  std::vector<std::vector<uint64_t>> seeds(2);
  for (int split = 0; split < 2; ++split) {
    Dataset ds;
    ds.size = size;
    ds.n = n_attrs;
    ds.samples.reserve(counts[split]);
    Rng& st = streams[split];
    for (int i = 0; i < counts[split]; ++i) {
      uint64_t s = st.next_u64();
      std::vector<uint8_t> attrs(n_attrs);
      for (int j = 0; j < n_attrs; ++j) attrs[j] = st.bernoulli(0.5) ? 1 : 0;
      ds.samples.push_back(render_sample(s, attrs, size));
      seeds[split].push_back(s);
    }
    write_dataset(ds, paths[split]);
  }
  std::ofstream mf(prefix + "-manifest.txt");
  if (!mf) throw FormatError(cat("cannot write ", prefix, "-manifest.txt"));
  mf << "# glyph-face dataset manifest\n";
  mf << "master_seed " << seed << " size " << size << " n " << n_attrs
     << "\n";
  const char* names[2] = {"train", "test"};
  for (int split = 0; split < 2; ++split) {
    mf << names[split] << " " << counts[split] << "\n";
    for (uint64_t s : seeds[split]) mf << s << "\n";
  }
  return {paths[0], paths[1]};
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(cat("cannot read ", path));
  Manifest m;
  std::string tok;
  is >> tok;  // '#'
  std::getline(is, tok);
  is >> tok >> m.master_seed >> tok >> m.size >> tok >> m.n;
  for (int split = 0; split < 2; ++split) {
    size_t count = 0;
    is >> tok >> count;
    auto& dst = tok == "train" ? m.train_seeds : m.test_seeds;
    dst.resize(count);
    for (size_t i = 0; i < count; ++i) is >> dst[i];
  }
  if (!is) throw FormatError(cat(path, ": malformed manifest"));
  return m;
}

}  // namespace attredit
