#include "echoloc/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "echoloc/errors.hpp"

namespace echoloc::io {
namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("io: expected a 3-element position array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_schema(const json& j, const char* what) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
    throw DataError(std::string("io: unsupported ") + what + " schema version");
}

}  // namespace

std::string frame_to_json(const Frame& frame) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["sample_rate_hz"] = frame.sample_rate;
  j["n_receivers"] = frame.n_receivers();
  j["n_samples"] = frame.n_samples();
  j["channels"] = frame.channels;
  j["gt_position_m"] = frame.gt_position ? vec3_to_json(*frame.gt_position) : json(nullptr);
  return j.dump();
}

Frame frame_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("io: bad frame JSON: ") + e.what());
  }
  check_schema(j, "frame");
  Frame frame;
  frame.sample_rate = j.at("sample_rate_hz").get<double>();
  frame.channels = j.at("channels").get<std::vector<std::vector<double>>>();
  if (!j.at("gt_position_m").is_null()) frame.gt_position = vec3_from_json(j["gt_position_m"]);
  const int n = j.at("n_receivers").get<int>();
  const int t = j.at("n_samples").get<int>();
  if (n != frame.n_receivers() || t != frame.n_samples())
    throw DataError("io: frame header counts disagree with channel data");
  frame.validate();
  return frame;
}

void save_dataset(const std::string& path, const std::vector<Frame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("io: cannot open '" + path + "' for writing");
  for (const Frame& f : frames) out << frame_to_json(f) << '\n';
  if (!out) throw DataError("io: write failed for '" + path + "'");
}

std::vector<Frame> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("io: cannot open dataset '" + path + "'");
  std::vector<Frame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    frames.push_back(frame_from_json(line));
  }
  if (frames.empty()) throw DataError("io: dataset '" + path + "' holds no frames");
  return frames;
}

void save_manifest(const std::string& dataset_path, const DatasetManifest& manifest) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = manifest.seed;
  json grid = json::array();
  for (const Vec3& g : manifest.grid) grid.push_back(vec3_to_json(g));
  j["grid"] = grid;
  j["noise_std"] = manifest.noise_std;
  j["counts"] = {{"frames", manifest.frame_count}, {"emg_components", manifest.component_count}};
  write_file(dataset_path + ".manifest.json", j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::string& dataset_path) {
  json j;
  try {
    j = json::parse(read_file(dataset_path + ".manifest.json"));
  } catch (const json::exception& e) {
    throw DataError(std::string("io: bad manifest JSON: ") + e.what());
  }
  check_schema(j, "manifest");
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const json& g : j.at("grid")) m.grid.push_back(vec3_from_json(g));
  m.noise_std = j.at("noise_std").get<double>();
  m.frame_count = j.at("counts").at("frames").get<int>();
  m.component_count = j.at("counts").at("emg_components").get<int>();
  return m;
}

void save_weights(const std::string& path, const MlpWeights& weights) {
  weights.validate();
  json j;
  j["schema_version"] = kSchemaVersion;
  j["dims"] = {8, 32, 32, 4, 1};
  j["weights"] = {weights.w1, weights.w2, weights.w3, weights.w4};
  j["biases"] = {weights.b1, weights.b2, weights.b3, weights.b4};
  j["feature_mean"] = weights.feature_mean;
  j["feature_std"] = weights.feature_std;
  j["arg_convention"] = to_string(weights.arg_convention);
  j["margin_q"] = weights.margin_q;
  write_file(path, j.dump(2) + "\n");
}

MlpWeights load_weights(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(std::string("io: bad weights JSON: ") + e.what());
  }
  check_schema(j, "weights");
  const std::vector<int> dims = j.at("dims").get<std::vector<int>>();
  if (dims != std::vector<int>{8, 32, 32, 4, 1})
    throw DataError("io: weights file has unsupported layer dimensions");
  MlpWeights w;
  const json& ws = j.at("weights");
  const json& bs = j.at("biases");
  if (ws.size() != 4 || bs.size() != 4)
    throw DataError("io: weights file must carry 4 weight and 4 bias arrays");
  w.w1 = ws[0].get<std::vector<double>>();
  w.w2 = ws[1].get<std::vector<double>>();
  w.w3 = ws[2].get<std::vector<double>>();
  w.w4 = ws[3].get<std::vector<double>>();
  w.b1 = bs[0].get<std::vector<double>>();
  w.b2 = bs[1].get<std::vector<double>>();
  w.b3 = bs[2].get<std::vector<double>>();
  w.b4 = bs[3].get<std::vector<double>>();
  w.feature_mean = j.at("feature_mean").get<std::array<double, 8>>();
  w.feature_std = j.at("feature_std").get<std::array<double, 8>>();
  w.arg_convention = arg_convention_from_string(j.at("arg_convention").get<std::string>());
  w.margin_q = j.at("margin_q").get<double>();
  w.validate();
  return w;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("io: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("io: cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw DataError("io: write failed for '" + path + "'");
}

}  // namespace echoloc::io
