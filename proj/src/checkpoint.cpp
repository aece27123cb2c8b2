#include "attredit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace attredit {
namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, uint32_t(v & 0xffffffffu));
  put_u32(os, uint32_t(v >> 32));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is) {
  uint64_t lo = get_u32(is);
  uint64_t hi = get_u32(is);
  return lo | hi << 32;
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

std::string get_str(std::istream& is) {
  uint32_t len = get_u32(is);
  if (len > (1u << 20)) throw FormatError("checkpoint: absurd string length");
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

void put_floats(std::ostream& os, const float* p, size_t count) {
  static_assert(sizeof(float) == 4);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits;
    std::memcpy(&bits, p + i, 4);
    put_u32(os, bits);
  }
}

void get_floats(std::istream& is, float* p, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = get_u32(is);
    std::memcpy(p + i, &bits, 4);
  }
}

}  // namespace

void write_params(const ParamFile& pf, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(cat("cannot write ", path));
  os.write("AEPM1", 5);
  put_u32(os, uint32_t(pf.size));
  put_u32(os, uint32_t(pf.base_c));
  put_u32(os, uint32_t(pf.n_attrs));
  put_u64(os, pf.seed);
  put_u32(os, uint32_t(pf.meta.size()));
  for (const auto& [k, v] : pf.meta) {
    put_str(os, k);
    put_str(os, v);
  }
  put_u32(os, uint32_t(pf.blobs.size()));
  for (const auto& [name, t] : pf.blobs) {
    put_str(os, name);
    put_u32(os, uint32_t(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) put_u32(os, uint32_t(t.dim(d)));
    put_floats(os, t.values().data(), size_t(t.numel()));
  }
  if (!os) throw FormatError(cat("write failed on ", path));
}

ParamFile read_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(cat("cannot read ", path));
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "AEPM1", 5) != 0)
    throw FormatError(cat(path, ": not a model parameter file"));
  ParamFile pf;
  pf.size = int(get_u32(is));
  pf.base_c = int(get_u32(is));
  pf.n_attrs = int(get_u32(is));
  pf.seed = get_u64(is);
  uint32_t nmeta = get_u32(is);
  for (uint32_t i = 0; i < nmeta; ++i) {
    std::string k = get_str(is);
    pf.meta[k] = get_str(is);
  }
  uint32_t nblobs = get_u32(is);
  pf.blobs.reserve(nblobs);
  for (uint32_t i = 0; i < nblobs; ++i) {
    std::string name = get_str(is);
    uint32_t nd = get_u32(is);
    if (nd > 8) throw FormatError(cat(path, ": blob ", name, " rank ", nd));
    Shape shape(nd);
    for (uint32_t d = 0; d < nd; ++d) shape[d] = int(get_u32(is));
    std::vector<float> data(size_t(numel(shape)));
    get_floats(is, data.data(), data.size());
    if (!is) throw FormatError(cat(path, ": truncated in blob ", name));
    pf.blobs.emplace_back(name,
                          Tensor<float>::from_vec(shape, std::move(data)));
  }
  return pf;
}

uint64_t name_list_hash(const std::vector<std::string>& names) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& n : names) {
    for (char c : n) {
      h ^= uint8_t(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

void put_adam(std::ostream& os, const AdamState& a) {
  put_u64(os, a.t);
  put_u32(os, uint32_t(a.m.size()));
  for (size_t i = 0; i < a.m.size(); ++i) {
    put_u32(os, uint32_t(a.m[i].size()));
    put_floats(os, a.m[i].data(), a.m[i].size());
    put_floats(os, a.v[i].data(), a.v[i].size());
  }
}

AdamState get_adam(std::istream& is) {
  AdamState a;
  a.t = get_u64(is);
  uint32_t count = get_u32(is);
  a.m.resize(count);
  a.v.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = get_u32(is);
    a.m[i].resize(len);
    a.v[i].resize(len);
    get_floats(is, a.m[i].data(), len);
    get_floats(is, a.v[i].data(), len);
  }
  return a;
}

}  // namespace

void write_train_state(const TrainState& ts, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(cat("cannot write ", path));
  os.write("AETS1", 5);
  put_u64(os, ts.g_step);
  put_u64(os, ts.dc_step);
  put_u64(os, ts.epoch);
  put_u64(os, ts.cursor);
  put_u64(os, ts.data_rng);
  put_u64(os, ts.target_rng);
  put_u64(os, ts.mix_rng);
  put_u64(os, ts.name_hash);
  put_adam(os, ts.adam_g);
  put_adam(os, ts.adam_dc);
  if (!os) throw FormatError(cat("write failed on ", path));
}

TrainState read_train_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(cat("cannot read ", path));
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "AETS1", 5) != 0)
    throw FormatError(cat(path, ": not a training state file"));
  TrainState ts;
  ts.g_step = get_u64(is);
  ts.dc_step = get_u64(is);
  ts.epoch = get_u64(is);
  ts.cursor = get_u64(is);
  ts.data_rng = get_u64(is);
  ts.target_rng = get_u64(is);
  ts.mix_rng = get_u64(is);
  ts.name_hash = get_u64(is);
  ts.adam_g = get_adam(is);
  ts.adam_dc = get_adam(is);
  if (!is) throw FormatError(cat(path, ": truncated"));
  return ts;
}

}  // namespace attredit
