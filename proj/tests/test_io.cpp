#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "echoloc/errors.hpp"
#include "echoloc/io.hpp"
#include "echoloc/rng.hpp"
#include "echoloc/simulator.hpp"

using namespace echoloc;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("echoloc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("frame json round trip") {
  Scene scene;
  scene.layout = default_layout();
  scene.targets = {{0.01, -0.02, 0.13}};
  scene.reflectivity = {0.9};
  scene.noise_std = 0.01;
  scene.rng_seed = 3;
  const Frame frame = synthesize_frame(scene).frame;

  const std::string text = io::frame_to_json(frame);
  const Frame loaded = io::frame_from_json(text);
  CHECK(loaded.sample_rate == frame.sample_rate);
  CHECK(loaded.channels == frame.channels);
  REQUIRE(loaded.gt_position.has_value());
  CHECK(loaded.gt_position->x == frame.gt_position->x);
  CHECK(loaded.gt_position->z == frame.gt_position->z);

  CHECK_THROWS_AS(io::frame_from_json("{not json"), DataError);
  CHECK_THROWS_AS(io::frame_from_json("{\"schema_version\": 99}"), DataError);
}

TEST_CASE("dataset save and load") {
  TempDir tmp;
  DatasetSpec spec;
  spec.grid = default_grid();
  spec.seed = 5;
  const auto frames = generate_dataset(spec);

  const std::string path = tmp.file("data.jsonl");
  io::save_dataset(path, frames);
  const auto loaded = io::load_dataset(path);
  REQUIRE(loaded.size() == frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(loaded[i].channels == frames[i].channels);
    CHECK(loaded[i].gt_position->x == frames[i].gt_position->x);
  }

  io::DatasetManifest manifest;
  manifest.seed = 5;
  manifest.grid = spec.grid;
  manifest.frame_count = static_cast<int>(frames.size());
  manifest.component_count = static_cast<int>(frames.size()) * 4;
  io::save_manifest(path, manifest);
  const auto loaded_manifest = io::load_manifest(path);
  CHECK(loaded_manifest.seed == 5);
  CHECK(loaded_manifest.grid.size() == 18);
  CHECK(loaded_manifest.frame_count == manifest.frame_count);

  CHECK_THROWS_AS(io::load_dataset(tmp.file("missing.jsonl")), DataError);
}

TEST_CASE("weights json round trip") {
  TempDir tmp;
  Rng rng(7);
  MlpWeights w = MlpWeights::zeros();
  for (auto* vec : {&w.w1, &w.w2, &w.w3, &w.w4, &w.b1, &w.b2, &w.b3, &w.b4})
    for (double& v : *vec) v = rng.uniform(-1, 1);
  for (int i = 0; i < 8; ++i) {
    w.feature_mean[i] = rng.uniform(-1, 1);
    w.feature_std[i] = rng.uniform(0.1, 2);
  }
  w.arg_convention = ArgConvention::Max;
  w.margin_q = 1.25;

  const std::string path = tmp.file("weights.json");
  io::save_weights(path, w);
  const MlpWeights loaded = io::load_weights(path);
  CHECK(loaded.w1 == w.w1);
  CHECK(loaded.w2 == w.w2);
  CHECK(loaded.w3 == w.w3);
  CHECK(loaded.w4 == w.w4);
  CHECK(loaded.b1 == w.b1);
  CHECK(loaded.b4 == w.b4);
  CHECK(loaded.feature_mean == w.feature_mean);
  CHECK(loaded.feature_std == w.feature_std);
  CHECK(loaded.arg_convention == ArgConvention::Max);
  CHECK(loaded.margin_q == 1.25);

  // malformed dimension rejection
  MlpWeights bad = w;
  bad.w2.pop_back();
  CHECK_THROWS_AS(io::save_weights(tmp.file("bad.json"), bad), DataError);
}
