// File formats and configuration: 8-bit image output is byte-exact and
// invertible, grid composition has the documented geometry, parameter and
// training-state files round-trip and reject corruption, and config lookup
// honors the cli > file > default precedence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attredit/checkpoint.hpp"
#include "attredit/config.hpp"
#include "attredit/image_io.hpp"
#include "attredit/model_io.hpp"
#include "doctest.h"

using namespace attredit;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  fs::path p = fs::temp_directory_path() / "attredit-io-tests";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(data.data(), std::streamsize(data.size()));
}

}  // namespace

TEST_CASE("color images serialize with exact header and payload bytes") {
  // Values chosen to land exactly on 8-bit levels of [-1,1].
  float lo = -1.0f, hi = 1.0f, step = (hi - lo) / 255.0f;
  std::vector<int> levels = {0, 255, 17, 128, 1, 254, 100, 200, 3, 77, 250, 9};
  std::vector<float> v(levels.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = lo + float(levels[i]) * step;
  Tensor<float> t = Tensor<float>::from_vec({3, 2, 2}, std::move(v));
  fs::path p = work_dir() / "exact.ppm";
  ImageWriteStats stats{};
  write_image(p.string(), t, lo, hi, &stats);
  CHECK(stats.clamped == 0);

  std::string data = slurp(p);
  std::string header = "P6\n2 2\n255\n";
  REQUIRE(data.size() == header.size() + 12);
  CHECK(data.substr(0, header.size()) == header);
  // Payload is row-major interleaved RGB; channel ch pixel (y,x) sits at
  // tensor index ch*4 + y*2 + x.
  const unsigned char* pay =
      reinterpret_cast<const unsigned char*>(data.data() + header.size());
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(int(pay[(y * 2 + x) * 3 + ch]) == levels[size_t(ch * 4 + y * 2 + x)]);
}

TEST_CASE("the 8-bit quantization is idempotent across round trips") {
  float lo = -1.0f, hi = 1.0f, step = (hi - lo) / 255.0f;
  Rng rng(64);
  std::vector<float> v(3 * 5 * 4);
  for (auto& x : v) x = lo + float(rng.below(256)) * step;
  Tensor<float> t = Tensor<float>::from_vec({3, 5, 4}, std::move(v));
  fs::path pa = work_dir() / "round-a.ppm";
  fs::path pb = work_dir() / "round-b.ppm";
  write_image(pa.string(), t, lo, hi);
  Tensor<float> back = read_image(pa.string(), lo, hi);
  REQUIRE(back.shape() == t.shape());
  for (int i = 0; i < t.numel(); ++i)
    CHECK(back.values()[size_t(i)] ==
          doctest::Approx(t.values()[size_t(i)]).epsilon(1e-6));
  // Re-serializing the read-back tensor reproduces the file byte for byte.
  write_image(pb.string(), back, lo, hi);
  CHECK(slurp(pa) == slurp(pb));
}

TEST_CASE("single-channel images use the grayscale format") {
  Tensor<float> t =
      Tensor<float>::from_vec({1, 2, 3}, {0.0f, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f});
  fs::path p = work_dir() / "gray.pgm";
  write_image(p.string(), t, 0.0f, 1.0f);
  std::string data = slurp(p);
  CHECK(data.substr(0, 9) == "P5\n3 2\n25");
  Tensor<float> back = read_image(p.string(), 0.0f, 1.0f);
  REQUIRE(back.shape() == Shape{1, 2, 3});
  for (int i = 0; i < 6; ++i)
    CHECK(back.values()[size_t(i)] ==
          doctest::Approx(t.values()[size_t(i)]).epsilon(0.5 / 255.0));
}

TEST_CASE("out-of-range pixels are clamped and counted") {
  Tensor<float> t =
      Tensor<float>::from_vec({1, 1, 4}, {-2.0f, 2.0f, 0.0f, 1.0f});
  fs::path p = work_dir() / "clamp.pgm";
  ImageWriteStats stats{};
  write_image(p.string(), t, -1.0f, 1.0f, &stats);
  CHECK(stats.clamped == 2);
  std::string data = slurp(p);
  const unsigned char* pay =
      reinterpret_cast<const unsigned char*>(data.data() + data.size() - 4);
  CHECK(int(pay[0]) == 0);
  CHECK(int(pay[1]) == 255);
}

TEST_CASE("malformed image files are rejected") {
  fs::path p = work_dir() / "bad.ppm";
  spit(p, "P7\n2 2\n255\nxxxxxxxxxxxx");
  CHECK_THROWS_AS(read_image(p.string(), 0, 1), FormatError);
  spit(p, "P6\n4 4\n255\nshort");
  CHECK_THROWS_AS(read_image(p.string(), 0, 1), FormatError);
  CHECK_THROWS_AS(read_image((work_dir() / "absent.ppm").string(), 0, 1),
                  FormatError);
  Tensor<float> bad2 = Tensor<float>::full({2, 2, 2}, 0.0f);
  CHECK_THROWS_AS(write_image(p.string(), bad2, 0, 1), FormatError);
  Tensor<float> ok = Tensor<float>::full({1, 2, 2}, 0.0f);
  CHECK_THROWS_AS(write_image(p.string(), ok, 1.0f, 1.0f), FormatError);
}

TEST_CASE("grid composition places panels with one-pixel separators") {
  auto panel = [](float fill) { return Tensor<float>::full({3, 4, 4}, fill); };
  Tensor<float> g = compose_grid({panel(0.0f), panel(1.0f), panel(0.25f)}, 2);
  REQUIRE(g.shape() == Shape{3, 9, 9});
  auto at = [&](int ch, int y, int x) {
    return g.values()[(size_t(ch) * 9 + y) * 9 + x];
  };
  CHECK(at(0, 0, 0) == 0.0f);    // panel 0, top-left cell
  CHECK(at(1, 3, 3) == 0.0f);    // panel 0, bottom-right cell
  CHECK(at(0, 0, 5) == 1.0f);    // panel 1 starts after the separator
  CHECK(at(2, 5, 0) == 0.25f);   // panel 2, second row
  CHECK(at(0, 0, 4) == 0.5f);    // vertical separator
  CHECK(at(0, 4, 0) == 0.5f);    // horizontal separator
  CHECK(at(0, 5, 5) == 0.5f);    // unfilled trailing cell
  CHECK_THROWS_AS(compose_grid({}, 1), FormatError);
  CHECK_THROWS_AS(
      compose_grid({panel(0.0f), Tensor<float>::full({3, 2, 2}, 0.0f)}, 2),
      FormatError);
}

TEST_CASE("the heat ramp hits black, red, yellow, and white") {
  Tensor<float> t =
      Tensor<float>::from_vec({1, 1, 4}, {0.0f, 1.0f / 3.0f, 2.0f / 3.0f, 1.0f});
  Tensor<float> h = heatmap(t);
  REQUIRE(h.shape() == Shape{3, 1, 4});
  auto at = [&](int ch, int x) { return h.values()[size_t(ch) * 4 + x]; };
  CHECK(at(0, 0) == 0.0f);  // black
  CHECK(at(1, 0) == 0.0f);
  CHECK(at(2, 0) == 0.0f);
  CHECK(at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));  // red
  CHECK(at(1, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(at(0, 2) == doctest::Approx(1.0).epsilon(1e-6));  // yellow
  CHECK(at(1, 2) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(at(2, 2) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(at(0, 3) == 1.0f);  // white
  CHECK(at(1, 3) == 1.0f);
  CHECK(at(2, 3) == 1.0f);

  Tensor<float> gray = gray_to_rgb(Tensor<float>::full({1, 2, 2}, 0.7f));
  REQUIRE(gray.shape() == Shape{3, 2, 2});
  for (float v : gray.values()) CHECK(v == 0.7f);
}

TEST_CASE("parameter files round-trip header, metadata, and blobs") {
  ParamFile pf;
  pf.size = 32;
  pf.base_c = 16;
  pf.n_attrs = 4;
  pf.seed = 0xdeadbeefcafef00dULL;
  pf.meta["steps"] = "4";
  pf.meta["single_mask"] = "0";
  pf.blobs.emplace_back(
      "g.w", Tensor<float>::from_vec({2, 3}, {1, -2, 3.5f, 0, 1e-8f, -1e8f}));
  pf.blobs.emplace_back("dc.b", Tensor<float>::from_vec({4}, {0, 1, 2, 3}));
  fs::path p = work_dir() / "params.bin";
  write_params(pf, p.string());

  ParamFile back = read_params(p.string());
  CHECK(back.size == 32);
  CHECK(back.base_c == 16);
  CHECK(back.n_attrs == 4);
  CHECK(back.seed == pf.seed);
  CHECK(back.meta == pf.meta);
  REQUIRE(back.blobs.size() == 2);
  CHECK(back.blobs[0].first == "g.w");
  REQUIRE(back.blobs[0].second.shape() == Shape{2, 3});
  CHECK(std::memcmp(back.blobs[0].second.values().data(),
                    pf.blobs[0].second.values().data(),
                    6 * sizeof(float)) == 0);
  CHECK(back.find("dc.b") != nullptr);
  CHECK(back.find("nope") == nullptr);
}

TEST_CASE("corrupted parameter files are rejected") {
  fs::path good = work_dir() / "p-good.bin";
  ParamFile pf;
  pf.blobs.emplace_back("w", Tensor<float>::full({8}, 1.0f));
  write_params(pf, good.string());

  std::string data = slurp(good);
  fs::path bad = work_dir() / "p-bad.bin";
  spit(bad, "XXXXX" + data.substr(5));
  CHECK_THROWS_AS(read_params(bad.string()), FormatError);
  spit(bad, data.substr(0, data.size() - 7));
  CHECK_THROWS_AS(read_params(bad.string()), FormatError);
  CHECK_THROWS_AS(read_params((work_dir() / "absent.bin").string()),
                  FormatError);
}

TEST_CASE("training state files round-trip every field") {
  TrainState ts;
  ts.g_step = 123;
  ts.dc_step = 615;
  ts.epoch = 2;
  ts.cursor = 47;
  ts.data_rng = 0x1111111111111111ULL;
  ts.target_rng = 0x2222222222222222ULL;
  ts.mix_rng = 0x3333333333333333ULL;
  ts.name_hash = name_list_hash({"g.w", "dc.b"});
  ts.adam_g.t = 123;
  ts.adam_g.m = {{0.1f, 0.2f}, {0.3f}};
  ts.adam_g.v = {{0.4f, 0.5f}, {0.6f}};
  ts.adam_dc.t = 615;
  ts.adam_dc.m = {{-1.0f}};
  ts.adam_dc.v = {{2.0f}};
  fs::path p = work_dir() / "state.bin";
  write_train_state(ts, p.string());

  TrainState back = read_train_state(p.string());
  CHECK(back.g_step == ts.g_step);
  CHECK(back.dc_step == ts.dc_step);
  CHECK(back.epoch == ts.epoch);
  CHECK(back.cursor == ts.cursor);
  CHECK(back.data_rng == ts.data_rng);
  CHECK(back.target_rng == ts.target_rng);
  CHECK(back.mix_rng == ts.mix_rng);
  CHECK(back.name_hash == ts.name_hash);
  CHECK(back.adam_g.t == 123);
  CHECK(back.adam_g.m == ts.adam_g.m);
  CHECK(back.adam_g.v == ts.adam_g.v);
  CHECK(back.adam_dc.m == ts.adam_dc.m);

  std::string data = slurp(p);
  fs::path bad = work_dir() / "state-bad.bin";
  spit(bad, data.substr(0, data.size() - 3));
  CHECK_THROWS_AS(read_train_state(bad.string()), FormatError);
  spit(bad, "AEPM1" + data.substr(5));
  CHECK_THROWS_AS(read_train_state(bad.string()), FormatError);
}

TEST_CASE("store restore rejects missing or reshaped blobs") {
  ParamStore<float> ps;
  ps.param("w", Tensor<float>::full({2, 2}, 0.0f));
  ParamFile missing;
  CHECK_THROWS_AS(file_to_store(missing, "g.", ps), FormatError);
  ParamFile wrong;
  wrong.blobs.emplace_back("g.w", Tensor<float>::full({2, 3}, 0.0f));
  CHECK_THROWS_AS(file_to_store(wrong, "g.", ps), FormatError);
  ParamFile right;
  right.blobs.emplace_back("g.w", Tensor<float>::full({2, 2}, 7.0f));
  file_to_store(right, "g.", ps);
  for (float v : ps.trainable[0].second.values()) CHECK(v == 7.0f);
}

TEST_CASE("config lookups honor cli over file over default") {
  fs::path p = work_dir() / "run.conf";
  spit(p,
       "# comment line\n"
       "\n"
       "  size = 24 \n"
       "lr=0.001\n"
       "tag=from-file\n");
  Config c;
  c.set_override("tag", "from-cli");
  c.set_override("extra", "1");
  c.load_file(p.string());

  CHECK(c.geti("size", 32) == 24);          // file beats default
  CHECK(c.gets("tag", "dflt") == "from-cli");  // cli beats file
  CHECK(c.getd("lr", 2e-4) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(c.geti("absent", 7) == 7);          // default
  CHECK(c.geti("extra", 0) == 1);

  std::ostringstream os;
  c.print_resolved(os);
  std::string r = os.str();
  CHECK(r.find("size=24\t# file") != std::string::npos);
  CHECK(r.find("tag=from-cli\t# cli") != std::string::npos);
  CHECK(r.find("absent=7\t# default") != std::string::npos);
}

TEST_CASE("unconsumed and malformed config entries are reported") {
  Config c;
  c.set_override("typo_key", "5");
  c.set_override("size", "32");
  CHECK(c.geti("size", 32) == 32);
  auto unknown = c.unknown_keys();
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0] == "typo_key");

  Config bad;
  bad.set_override("size", "abc");
  CHECK_THROWS_AS(bad.geti("size", 32), UsageError);
  Config bad2;
  bad2.set_override("lr", "fast");
  CHECK_THROWS_AS(bad2.getd("lr", 1e-3), UsageError);
  Config bad3;
  bad3.set_override("flag", "maybe");
  CHECK_THROWS_AS(bad3.getb("flag", false), UsageError);
  Config bad4;
  bad4.set_override("size", "32x");
  CHECK_THROWS_AS(bad4.geti("size", 32), UsageError);

  fs::path p = work_dir() / "bad.conf";
  spit(p, "key-without-value\n");
  Config c2;
  CHECK_THROWS_AS(c2.load_file(p.string()), FormatError);
  Config c3;
  CHECK_THROWS_AS(c3.load_file((work_dir() / "absent.conf").string()),
                  FormatError);
}
