#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "echoloc/correspondence.hpp"
#include "echoloc/signal.hpp"
#include "echoloc/simulator.hpp"

namespace echoloc::io {

inline constexpr int kSchemaVersion = 1;

/// Frame object schema: {schema_version, sample_rate_hz, n_receivers,
/// n_samples, channels, gt_position_m}.
std::string frame_to_json(const Frame& frame);
Frame frame_from_json(const std::string& json_text);

/// JSON Lines, one frame per line.
void save_dataset(const std::string& path, const std::vector<Frame>& frames);
std::vector<Frame> load_dataset(const std::string& path);

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::vector<Vec3> grid;
  double noise_std = 0;
  int frame_count = 0;
  int component_count = 0;  // EMG components across the dataset
};

/// Sidecar manifest written next to the dataset as <path>.manifest.json.
void save_manifest(const std::string& dataset_path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& dataset_path);

/// Weight file schema: {schema_version, dims, weights, biases, feature_mean,
/// feature_std, arg_convention, margin_q}.
void save_weights(const std::string& path, const MlpWeights& weights);
MlpWeights load_weights(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace echoloc::io
