#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"

using namespace lorapatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lorapatch_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synth_faces is deterministic and in range") {
  dataio::Dataset a = dataio::synth_faces(6, 32, 9);
  dataio::Dataset b = dataio::synth_faces(6, 32, 9);
  REQUIRE(a.size() == 6);
  CHECK(a.height == 32);
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.items[i].id == b.items[i].id);
    CHECK(max_abs_diff(a.items[i].image, b.items[i].image) == 0.f);
    for (float v : a.items[i].image.v) {
      CHECK(v >= -1.f);
      CHECK(v <= 1.f);
    }
  }
  dataio::Dataset c = dataio::synth_faces(6, 32, 10);
  CHECK(max_abs_diff(a.items[0].image, c.items[0].image) > 0.f);
}

TEST_CASE("synth_faces samples are non-degenerate") {
  dataio::Dataset ds = dataio::synth_faces(10, 32, 3);
  double mean_l2 = 0;
  int pairs = 0;
  for (int i = 0; i < ds.size(); ++i)
    for (int j = i + 1; j < ds.size(); ++j) {
      mean_l2 += mean_sq_diff(ds.items[i].image, ds.items[j].image);
      ++pairs;
    }
  CHECK(mean_l2 / pairs > 0.01);
}

TEST_CASE("normalization endpoints and roundtrip") {
  CHECK(dataio::u8_to_unit(255) == doctest::Approx(1.f));
  CHECK(dataio::u8_to_unit(0) == doctest::Approx(-1.f));
  for (int b : {0, 1, 127, 128, 254, 255}) CHECK(dataio::unit_to_u8(dataio::u8_to_unit(b)) == b);
}

TEST_CASE("png save/load roundtrip preserves bytes") {
  fs::path dir = temp_dir("png_roundtrip");
  dataio::Dataset ds = dataio::synth_faces(3, 16, 4);
  dataio::save_dataset_png(ds, dir.string());
  dataio::Dataset back = dataio::load_folder(dir.string(), 16);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    // synth pixels are already on the u8 grid, so the roundtrip is exact
    CHECK(max_abs_diff(ds.items[i].image, back.items[i].image) < 1e-6f);
  }
}

TEST_CASE("load_folder sorts, limits, and skips undecodable files") {
  fs::path dir = temp_dir("folder");
  dataio::Dataset ds = dataio::synth_faces(5, 16, 5);
  dataio::save_dataset_png(ds, dir.string());
  std::ofstream(dir / "aaa_junk.png") << "not a png";

  std::vector<std::string> skipped;
  dataio::Dataset limited = dataio::load_folder(dir.string(), 16, 3, &skipped);
  CHECK(limited.size() == 3);
  CHECK(limited.items[0].id < limited.items[1].id);
  REQUIRE(skipped.size() >= 1);
  CHECK(skipped[0].find("aaa_junk") != std::string::npos);

  CHECK_THROWS_AS(dataio::load_folder((dir / "missing").string(), 16), IoError);
  fs::path empty = temp_dir("empty_folder");
  CHECK_THROWS_AS(dataio::load_folder(empty.string(), 16), IoError);
}

TEST_CASE("load_folder resizes to the requested square size") {
  fs::path dir = temp_dir("resize");
  dataio::Dataset ds = dataio::synth_faces(1, 48, 6);
  dataio::save_dataset_png(ds, dir.string());
  dataio::Dataset small = dataio::load_folder(dir.string(), 16);
  CHECK(small.items[0].image.h == 16);
  CHECK(small.items[0].image.w == 16);
}

TEST_CASE("split is deterministic, disjoint, and covering") {
  dataio::Dataset ds = dataio::synth_faces(10, 16, 7);
  auto [a1, b1] = dataio::split(ds, {0.8, 0.2}, 3);
  auto [a2, b2] = dataio::split(ds, {0.8, 0.2}, 3);
  CHECK(a1.size() == 8);
  CHECK(b1.size() == 2);
  std::vector<std::string> ids;
  for (const auto& it : a1.items) ids.push_back(it.id);
  for (const auto& it : b1.items) ids.push_back(it.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::unique(ids.begin(), ids.end()) == ids.end());
  CHECK(ids.size() == 10);
  for (int i = 0; i < a1.size(); ++i) CHECK(a1.items[i].id == a2.items[i].id);
  CHECK_THROWS_AS(dataio::split(ds, {0.5, 0.6}, 3), ConfigError);
}

TEST_CASE("stack batches items in order") {
  dataio::Dataset ds = dataio::synth_faces(4, 16, 8);
  Tensor batch = ds.stack(1, 2);
  CHECK(batch.n == 2);
  CHECK(max_abs_diff(batch.slice(0), ds.items[1].image) == 0.f);
  CHECK(max_abs_diff(batch.slice(1), ds.items[2].image) == 0.f);
}
