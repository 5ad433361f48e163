// Command-line front end: dataset synthesis, detection/fit dumps, model
// training, localization reports and the association ablation matrix.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "echoloc/errors.hpp"
#include "echoloc/io.hpp"
#include "echoloc/pipeline.hpp"

namespace {

using namespace echoloc;
using nlohmann::json;

struct CliOptions {
  std::uint64_t seed = 0;
  bool seed_set = false;
  RunConfig run;
  TrainConfig train;
};

std::uint64_t env_seed() {
  if (const char* env = std::getenv("ECHOLOC_SEED"); env && *env)
    return std::strtoull(env, nullptr, 10);
  return 0;
}

void apply_config_file(const std::string& path, CliOptions& opt) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(std::string("config: bad JSON: ") + e.what());
  }
  if (j.contains("seed")) {
    opt.seed = j["seed"].get<std::uint64_t>();
    opt.seed_set = true;
  }
  if (j.contains("rel_threshold")) opt.run.rel_threshold = j["rel_threshold"].get<double>();
  if (j.contains("abs_threshold") && !j["abs_threshold"].is_null())
    opt.run.abs_threshold = j["abs_threshold"].get<double>();
  if (j.contains("fit_interpolation")) opt.run.fit_interpolation = j["fit_interpolation"].get<int>();
  if (j.contains("label_gate_samples"))
    opt.run.label_gate_samples = j["label_gate_samples"].get<double>();
  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (s.contains("step_size")) opt.run.solver.step_size = s["step_size"].get<double>();
    if (s.contains("max_iterations")) opt.run.solver.max_iterations = s["max_iterations"].get<int>();
    if (s.contains("residual_tolerance"))
      opt.run.solver.residual_tolerance = s["residual_tolerance"].get<double>();
  }
  if (j.contains("lm")) {
    const json& s = j["lm"];
    if (s.contains("initial_damping")) opt.run.lm.initial_damping = s["initial_damping"].get<double>();
    if (s.contains("max_iterations")) opt.run.lm.max_iterations = s["max_iterations"].get<int>();
    if (s.contains("min_energy_delta"))
      opt.run.lm.min_energy_delta = s["min_energy_delta"].get<double>();
    if (s.contains("min_spread")) opt.run.lm.min_spread = s["min_spread"].get<double>();
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    if (s.contains("learning_rate")) opt.train.learning_rate = s["learning_rate"].get<double>();
    if (s.contains("lambda_c")) opt.train.lambda_c = s["lambda_c"].get<double>();
    if (s.contains("lambda_b")) opt.train.lambda_b = s["lambda_b"].get<double>();
    if (s.contains("margin_q")) opt.train.margin_q = s["margin_q"].get<double>();
    if (s.contains("early_stop_tolerance"))
      opt.train.early_stop_tolerance = s["early_stop_tolerance"].get<int>();
    if (s.contains("early_stop_min_delta"))
      opt.train.early_stop_min_delta = s["early_stop_min_delta"].get<double>();
    if (s.contains("max_epochs")) opt.train.max_epochs = s["max_epochs"].get<int>();
    if (s.contains("validation_fraction"))
      opt.train.validation_fraction = s["validation_fraction"].get<double>();
    if (s.contains("arg_convention"))
      opt.train.arg_convention = arg_convention_from_string(s["arg_convention"].get<std::string>());
  }
}

std::string csv_num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

int cmd_simulate(const CliOptions& opt, const std::string& grid_name, int frames, int reps,
                 double noise, int clutter, bool ambiguous, double jitter,
                 const std::string& out_path) {
  DatasetSpec spec;
  if (grid_name == "default" || grid_name == "paper") {
    spec.grid = default_grid();
  } else {
    throw DataError("simulate: unknown grid preset '" + grid_name + "'");
  }
  spec.total_frames = frames;
  spec.repetitions = reps;
  spec.noise_std = noise;
  spec.clutter_per_channel = clutter;
  spec.ambiguous_clutter = ambiguous;
  spec.position_jitter = jitter;
  spec.seed = opt.seed;
  spec.layout = default_layout();

  const std::vector<Frame> dataset = generate_dataset(spec);
  io::save_dataset(out_path, dataset);
  io::DatasetManifest manifest;
  manifest.seed = spec.seed;
  manifest.grid = spec.grid;
  manifest.noise_std = spec.noise_std;
  manifest.frame_count = static_cast<int>(dataset.size());
  manifest.component_count = static_cast<int>(dataset.size()) * dataset[0].n_receivers() *
                             (1 + spec.clutter_per_channel);
  io::save_manifest(out_path, manifest);
  std::cout << "wrote " << dataset.size() << " frames to " << out_path << "\n";
  return 0;
}

int cmd_detect(const CliOptions& opt, const std::string& frames_path, const std::string& out_path) {
  const std::vector<Frame> frames = io::load_dataset(frames_path);
  std::string csv = "frame,channel,sample_index,toa_s,envelope_value\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto detections = opt.run.abs_threshold
                                ? detect_toas(frames[f], *opt.run.abs_threshold)
                                : detect_toas_relative(frames[f], opt.run.rel_threshold);
    for (const auto& channel : detections)
      for (const ToaDetection& d : channel)
        csv += std::to_string(f) + ',' + std::to_string(d.channel) + ',' +
               std::to_string(d.sample_index) + ',' + csv_num(d.toa, "%.9f") + ',' +
               csv_num(d.envelope_value) + '\n';
  }
  io::write_file(out_path, csv);
  std::cout << "wrote detections for " << frames.size() << " frames to " << out_path << "\n";
  return 0;
}

int cmd_fit(const CliOptions& opt, const std::string& frames_path, const std::string& out_path) {
  const std::vector<Frame> frames = io::load_dataset(frames_path);
  const int factor = std::max(opt.run.fit_interpolation, 1);
  const double t_step = 1.0 / factor;
  std::string out;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto detections = opt.run.abs_threshold
                                ? detect_toas(frames[f], *opt.run.abs_threshold)
                                : detect_toas_relative(frames[f], opt.run.rel_threshold);
    json jframe;
    jframe["frame"] = f;
    json jchannels = json::array();
    for (std::size_t n = 0; n < frames[f].channels.size(); ++n) {
      json jch;
      jch["channel"] = n;
      json comps = json::array();
      if (!detections[n].empty()) {
        std::vector<int> seeds;
        for (const ToaDetection& d : detections[n]) seeds.push_back(d.sample_index);
        const auto env = hilbert_envelope_interpolated(frames[f].channels[n], factor);
        const ChannelFit fit = fit_memg(env, seeds, t_step, opt.run.lm);
        for (const EmgParams& p : fit.components)
          comps.push_back({{"alpha", p.amplitude},
                           {"mu", p.mean},
                           {"sigma", p.spread},
                           {"eta", p.asymmetry}});
        jch["energy"] = fit.energy;
        jch["iterations"] = fit.iterations;
      } else {
        jch["energy"] = 0.0;
        jch["iterations"] = 0;
      }
      jch["components"] = comps;
      jchannels.push_back(jch);
    }
    jframe["channels"] = jchannels;
    out += jframe.dump() + '\n';
  }
  io::write_file(out_path, out);
  std::cout << "wrote fits for " << frames.size() << " frames to " << out_path << "\n";
  return 0;
}

int cmd_train(const CliOptions& opt, const std::string& frames_path, const std::string& out_path,
              const std::string& history_path) {
  const std::vector<Frame> frames = io::load_dataset(frames_path);
  const SensorLayout layout = default_layout();
  std::vector<LabeledFrame> labeled;
  labeled.reserve(frames.size());
  for (const Frame& f : frames) labeled.push_back(extract_labeled_frame(f, layout, opt.run));

  TrainConfig cfg = opt.train;
  cfg.rng_seed = opt.seed;
  TrainHistory history;
  const MlpWeights weights = train(labeled, cfg, &history);
  io::save_weights(out_path, weights);
  if (!history_path.empty()) {
    std::string csv = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e)
      csv += std::to_string(e) + ',' + csv_num(history.train_loss[e]) + ',' +
             csv_num(history.val_loss[e]) + '\n';
    io::write_file(history_path, csv);
  }
  std::cout << "trained " << history.epochs_run << " epochs (best epoch " << history.best_epoch
            << "), weights written to " << out_path << "\n";
  return 0;
}

int cmd_localize(const CliOptions& opt, const std::string& frames_path,
                 const std::string& weights_path, const std::string& out_path, bool print_report) {
  const std::vector<Frame> frames = io::load_dataset(frames_path);
  const MlpWeights weights = io::load_weights(weights_path);
  const SensorLayout layout = default_layout();
  std::vector<LocalizationRecord> records;
  records.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    try {
      records.push_back(localize_frame(frames[f], layout, weights, opt.run));
    } catch (const DataError& e) {
      throw DataError("frame " + std::to_string(f) + ": " + e.what());
    }
  }
  const Report report = rmse_report(records);
  io::write_file(out_path, report_to_csv(report));
  if (print_report) std::cout << report_to_text(report);
  std::cout << "wrote " << records.size() << " localization records to " << out_path << "\n";
  return 0;
}

int cmd_ablate(const CliOptions& opt, const std::string& frames_path, const std::string& out_path,
               double test_fraction) {
  const std::vector<Frame> frames = io::load_dataset(frames_path);
  const SensorLayout layout = default_layout();
  TrainConfig cfg = opt.train;
  cfg.rng_seed = opt.seed;
  const AblationTable table = run_ablation(frames, layout, opt.run, cfg, test_fraction);
  std::string csv = "features,reference,association,accuracy,f1\n";
  for (const AblationRow& row : table.rows)
    csv += row.features + ',' + row.reference + ',' + row.association + ',' +
           csv_num(row.metrics.accuracy, "%.4f") + ',' + csv_num(row.metrics.f1, "%.4f") + '\n';
  io::write_file(out_path, csv);
  std::cout << csv;
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path) {
  std::istringstream in(io::read_file(in_path));
  std::vector<ReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("x,", 0) == 0 || line.rfind("MEAN", 0) == 0 || line.rfind("STD", 0) == 0)
      continue;
    std::istringstream ls(line);
    std::vector<double> cols;
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      if (cell.empty()) continue;
      try {
        cols.push_back(std::stod(cell));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric || cols.size() < 6) {
      if (!numeric && rows.empty()) continue;  // header with other column names
      throw DataError("report: need at least 6 numeric columns per row (gt and estimate, mm)");
    }
    ReportRow row;
    row.gt_mm = {cols[0], cols[1], cols[2]};
    row.estimate_mm = {cols[3], cols[4], cols[5]};
    if (cols.size() >= 9) row.converged = cols[8] != 0.0;
    rows.push_back(row);
  }
  const Report report = rmse_report_from_rows(std::move(rows));
  if (!out_path.empty()) io::write_file(out_path, report_to_csv(report));
  std::cout << report_to_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3-D acoustic echolocation toolkit: synthetic scenes, echo detection and"
               " fitting, learned echo correspondence and ellipsoid-intersection localization"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions opt;
  opt.seed = env_seed();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags win over file values)");
  auto* seed_opt = app.add_option("--seed", opt.seed, "Seed for all randomness");
  auto* rel_tau_opt =
      app.add_option("--rel-tau", opt.run.rel_threshold, "Relative detection threshold");
  double abs_tau = 0;
  auto* abs_tau_opt = app.add_option("--tau", abs_tau, "Absolute detection threshold");
  auto* interp_opt = app.add_option("--interp", opt.run.fit_interpolation,
                                    "Envelope interpolation factor for fitting");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic labeled dataset");
  std::string grid_name = "default";
  int sim_frames = 0, sim_reps = 1, sim_clutter = 0;
  double sim_noise = 0, sim_jitter = 0;
  bool sim_ambiguous = false;
  std::string sim_out;
  sim->add_option("--grid", grid_name, "Position grid preset (default)");
  sim->add_option("--frames", sim_frames, "Total frame count (0: grid x reps)");
  sim->add_option("--reps", sim_reps, "Repetitions per grid position");
  sim->add_option("--noise", sim_noise, "Gaussian noise standard deviation");
  sim->add_option("--clutter", sim_clutter, "Clutter components per channel");
  sim->add_flag("--ambiguous", sim_ambiguous, "Place one clutter echo near the target ToA");
  sim->add_option("--jitter", sim_jitter, "Uniform position jitter per axis (m)");
  sim->add_option("--out", sim_out, "Output dataset path (JSON Lines)")->required();

  // detect
  auto* det = app.add_subcommand("detect", "Dump threshold-gradient ToA detections");
  std::string det_frames, det_out;
  det->add_option("--frames", det_frames, "Input dataset")->required();
  det->add_option("--out", det_out, "Output CSV")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Dump fitted echo components per frame");
  std::string fit_frames, fit_out;
  fit->add_option("--frames", fit_frames, "Input dataset")->required();
  fit->add_option("--out", fit_out, "Output JSON Lines")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train the echo correspondence model");
  std::string tr_frames, tr_out, tr_history;
  std::string tr_convention;
  tr->add_option("--frames", tr_frames, "Labeled training dataset")->required();
  tr->add_option("--out", tr_out, "Output weights JSON")->required();
  tr->add_option("--history", tr_history, "Optional loss-history CSV");
  tr->add_option("--lr", opt.train.learning_rate, "Learning rate");
  tr->add_option("--lambda-c", opt.train.lambda_c, "Contrastive loss weight");
  tr->add_option("--lambda-b", opt.train.lambda_b, "BCE loss weight");
  tr->add_option("--margin-q", opt.train.margin_q, "Contrastive margin");
  tr->add_option("--tolerance", opt.train.early_stop_tolerance, "Early stopping patience");
  tr->add_option("--min-delta", opt.train.early_stop_min_delta, "Early stopping min delta");
  tr->add_option("--max-epochs", opt.train.max_epochs, "Epoch cap");
  tr->add_option("--val-fraction", opt.train.validation_fraction, "Validation split fraction");
  tr->add_option("--arg-convention", tr_convention, "Reference selection: min or max");

  // localize
  auto* loc = app.add_subcommand("localize", "Run the full localization pipeline");
  std::string loc_frames, loc_weights, loc_out;
  bool loc_report = false;
  loc->add_option("--frames", loc_frames, "Input dataset")->required();
  loc->add_option("--weights", loc_weights, "Correspondence model weights")->required();
  loc->add_option("--out", loc_out, "Output records CSV")->required();
  loc->add_flag("--report", loc_report, "Print the human-readable report");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Run the echo-association ablation matrix");
  std::string abl_frames, abl_out;
  double abl_test_fraction = 0.3;
  abl->add_option("--frames", abl_frames, "Labeled dataset")->required();
  abl->add_option("--out", abl_out, "Output CSV")->required();
  abl->add_option("--test-fraction", abl_test_fraction, "Held-out test fraction");

  // report
  auto* rep = app.add_subcommand("report", "Re-render a localization report from records");
  std::string rep_in, rep_out;
  rep->add_option("--in", rep_in, "Input records CSV (mm)")->required();
  rep->add_option("--out", rep_out, "Optional output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) {
      CliOptions from_file;
      from_file.seed = opt.seed;
      apply_config_file(config_path, from_file);
      // flags win over file values
      if (seed_opt->count() == 0 && from_file.seed_set) opt.seed = from_file.seed;
      if (rel_tau_opt->count() == 0) opt.run.rel_threshold = from_file.run.rel_threshold;
      if (abs_tau_opt->count() == 0) opt.run.abs_threshold = from_file.run.abs_threshold;
      if (interp_opt->count() == 0) opt.run.fit_interpolation = from_file.run.fit_interpolation;
      opt.run.label_gate_samples = from_file.run.label_gate_samples;
      opt.run.solver = from_file.run.solver;
      opt.run.lm = from_file.run.lm;
      const TrainConfig defaults;
      auto keep = [&](auto& target, const auto& file_value, const auto& default_value) {
        if (target == default_value) target = file_value;
      };
      keep(opt.train.learning_rate, from_file.train.learning_rate, defaults.learning_rate);
      keep(opt.train.lambda_c, from_file.train.lambda_c, defaults.lambda_c);
      keep(opt.train.lambda_b, from_file.train.lambda_b, defaults.lambda_b);
      keep(opt.train.margin_q, from_file.train.margin_q, defaults.margin_q);
      keep(opt.train.early_stop_tolerance, from_file.train.early_stop_tolerance,
           defaults.early_stop_tolerance);
      keep(opt.train.max_epochs, from_file.train.max_epochs, defaults.max_epochs);
      keep(opt.train.validation_fraction, from_file.train.validation_fraction,
           defaults.validation_fraction);
    }
    if (abs_tau_opt->count() > 0) opt.run.abs_threshold = abs_tau;
    if (!tr_convention.empty())
      opt.train.arg_convention = arg_convention_from_string(tr_convention);

    if (sim->parsed())
      return cmd_simulate(opt, grid_name, sim_frames, sim_reps, sim_noise, sim_clutter,
                          sim_ambiguous, sim_jitter, sim_out);
    if (det->parsed()) return cmd_detect(opt, det_frames, det_out);
    if (fit->parsed()) return cmd_fit(opt, fit_frames, fit_out);
    if (tr->parsed()) return cmd_train(opt, tr_frames, tr_out, tr_history);
    if (loc->parsed()) return cmd_localize(opt, loc_frames, loc_weights, loc_out, loc_report);
    if (abl->parsed()) return cmd_ablate(opt, abl_frames, abl_out, abl_test_fraction);
    if (rep->parsed()) return cmd_report(rep_in, rep_out);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
