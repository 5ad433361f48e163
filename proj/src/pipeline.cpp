#include "echoloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include "echoloc/errors.hpp"
#include "echoloc/rng.hpp"

namespace echoloc {
namespace {

struct ChannelExtraction {
  FrameFeatures features;                 // per channel
  std::vector<std::vector<double>> toas;  // fitted component means, sample units
};

ChannelExtraction extract_features(const Frame& frame, const SensorLayout& layout,
                                   const RunConfig& cfg) {
  frame.validate();
  layout.validate();
  if (frame.n_receivers() != static_cast<int>(layout.receivers.size()))
    throw DataError("pipeline: frame has " + std::to_string(frame.n_receivers()) +
                    " channels but the layout has " + std::to_string(layout.receivers.size()) +
                    " receivers");

  const auto detections = cfg.abs_threshold ? detect_toas(frame, *cfg.abs_threshold)
                                            : detect_toas_relative(frame, cfg.rel_threshold);
  const int factor = std::max(cfg.fit_interpolation, 1);
  const double t_step = 1.0 / factor;

  ChannelExtraction out;
  out.features.resize(frame.channels.size());
  out.toas.resize(frame.channels.size());
  for (std::size_t n = 0; n < frame.channels.size(); ++n) {
    if (detections[n].empty()) continue;
    // envelope ripple can fire two edges on one pulse flank; a component pair
    // on one pulse destabilizes the joint fit, so seeds closer than 3 samples
    // collapse to the first
    std::vector<int> seeds;
    seeds.reserve(detections[n].size());
    for (const ToaDetection& d : detections[n])
      if (seeds.empty() || d.sample_index - seeds.back() >= 3) seeds.push_back(d.sample_index);
    const std::vector<double> env = hilbert_envelope_interpolated(frame.channels[n], factor);
    const ChannelFit fit = fit_memg(env, seeds, t_step, cfg.lm);
    out.features[n] = assemble_features(fit, env, t_step, frame.n_samples());
    out.toas[n].reserve(fit.components.size());
    for (const EmgParams& p : fit.components) out.toas[n].push_back(p.mean);
  }
  return out;
}

double column_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double column_std(const std::vector<double>& v, double mean) {
  double acc = 0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));  // population
}

void append_csv_number(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out += buf;
}

}  // namespace

LocalizationRecord localize_frame(const Frame& frame, const SensorLayout& layout,
                                  const MlpWeights& weights, const RunConfig& cfg) {
  const ChannelExtraction ext = extract_features(frame, layout, cfg);

  std::size_t total_echoes = 0;
  for (const auto& ch : ext.features) total_echoes += ch.size();
  if (total_echoes == 0)
    throw DataError("localize: no echoes detected in any channel (insufficient correspondence)");

  LocalizationRecord rec;
  rec.correspondence = match_echoes(ext.features, weights);

  std::vector<Ellipsoid> ellipsoids;
  for (std::size_t n = 0; n < ext.features.size(); ++n) {
    const int k = rec.correspondence.matched[n];
    if (k < 0) continue;
    const double mu = ext.features[n][static_cast<std::size_t>(k)].params.mean;
    const double round_trip =
        round_trip_from_toa(mu / frame.sample_rate, layout.speed_of_sound);
    const double baseline = distance(layout.emitter, layout.receivers[n]);
    if (!(round_trip > baseline)) continue;  // infeasible fit, drop the channel
    ellipsoids.push_back(ellipsoid_from_pair(layout.emitter, layout.receivers[n], round_trip));
  }
  if (ellipsoids.size() < 3)
    throw DataError("localize: only " + std::to_string(ellipsoids.size()) +
                    " channels carry a usable matched echo; need 3 (insufficient correspondence)");

  SolverConfig solver = cfg.solver;
  solver.facing = layout.facing;
  const SolveResult sol = solve(ellipsoids, solver);
  rec.estimate = sol.position;
  rec.converged = sol.converged;
  rec.gt = frame.gt_position;
  if (rec.gt) {
    const double err = distance(*rec.gt, rec.estimate);
    rec.rmse_mm = 1000.0 * err;
    rec.rmse_percent = rec.gt->norm() > 0 ? 100.0 * err / rec.gt->norm() : 0.0;
  }
  return rec;
}

LabeledFrame extract_labeled_frame(const Frame& frame, const SensorLayout& layout,
                                   const RunConfig& cfg) {
  if (!frame.gt_position) throw DataError("extract_labeled_frame: frame carries no GT position");
  const ChannelExtraction ext = extract_features(frame, layout, cfg);
  LabeledFrame lf;
  lf.features = ext.features;
  lf.labels = label_from_gt(*frame.gt_position, ext.toas, layout, frame.sample_rate,
                            cfg.label_gate_samples);
  return lf;
}

void prune_unlabeled_channels(std::vector<LabeledFrame>& frames) {
  for (LabeledFrame& lf : frames) {
    FrameFeatures kept_features;
    std::vector<std::vector<int>> kept_labels;
    for (std::size_t n = 0; n < lf.features.size(); ++n) {
      const int positives = std::accumulate(lf.labels[n].begin(), lf.labels[n].end(), 0);
      if (positives > 0) {
        kept_features.push_back(std::move(lf.features[n]));
        kept_labels.push_back(std::move(lf.labels[n]));
      }
    }
    lf.features = std::move(kept_features);
    lf.labels = std::move(kept_labels);
  }
  std::erase_if(frames, [](const LabeledFrame& lf) { return lf.features.size() < 2; });
}

Report rmse_report(std::span<const LocalizationRecord> records) {
  if (records.empty()) throw DataError("rmse_report: no records");
  std::vector<ReportRow> rows;
  rows.reserve(records.size());
  for (const LocalizationRecord& r : records) {
    if (!r.gt) throw DataError("rmse_report: record without GT position");
    ReportRow row;
    row.gt_mm = *r.gt * 1000.0;
    row.estimate_mm = r.estimate * 1000.0;
    row.converged = r.converged;
    rows.push_back(row);
  }
  return rmse_report_from_rows(std::move(rows));
}

Report rmse_report_from_rows(std::vector<ReportRow> rows) {
  if (rows.empty()) throw DataError("rmse_report: no rows");
  Report rep;
  std::vector<double> mm, pct;
  for (ReportRow& row : rows) {
    const double err = distance(row.gt_mm, row.estimate_mm);
    row.rmse_mm = err;
    row.rmse_percent = row.gt_mm.norm() > 0 ? 100.0 * err / row.gt_mm.norm() : 0.0;
    mm.push_back(row.rmse_mm);
    pct.push_back(row.rmse_percent);
  }
  rep.rows = std::move(rows);
  rep.mean_mm = column_mean(mm);
  rep.std_mm = column_std(mm, rep.mean_mm);
  rep.mean_percent = column_mean(pct);
  rep.std_percent = column_std(pct, rep.mean_percent);
  return rep;
}

std::string report_to_csv(const Report& report) {
  std::string out = "x,y,z,x_star,y_star,z_star,rmse_mm,rmse_pct,converged\n";
  for (const ReportRow& r : report.rows) {
    const double cols[8] = {r.gt_mm.x,       r.gt_mm.y,       r.gt_mm.z,
                            r.estimate_mm.x, r.estimate_mm.y, r.estimate_mm.z,
                            r.rmse_mm,       r.rmse_percent};
    for (double c : cols) {
      append_csv_number(out, c);
      out += ',';
    }
    out += r.converged ? '1' : '0';
    out += '\n';
  }
  out += "MEAN,,,,,,";
  append_csv_number(out, report.mean_mm);
  out += ',';
  append_csv_number(out, report.mean_percent);
  out += ",\nSTD,,,,,,";
  append_csv_number(out, report.std_mm);
  out += ',';
  append_csv_number(out, report.std_percent);
  out += ",\n";
  return out;
}

std::string report_to_text(const Report& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%28s | %28s | %9s %8s\n", "ground truth [mm]", "estimate [mm]",
                "err [mm]", "err [%]");
  out += buf;
  for (const ReportRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%8.1f %8.1f %8.1f  | %8.1f %8.1f %8.1f  | %9.1f %8.1f\n",
                  r.gt_mm.x, r.gt_mm.y, r.gt_mm.z, r.estimate_mm.x, r.estimate_mm.y,
                  r.estimate_mm.z, r.rmse_mm, r.rmse_percent);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%60s  %9.1f %8.1f\n", "Mean", report.mean_mm,
                report.mean_percent);
  out += buf;
  std::snprintf(buf, sizeof buf, "%60s  %9.1f %8.1f\n", "Std", report.std_mm,
                report.std_percent);
  out += buf;
  return out;
}

Metrics association_metrics(const std::vector<std::vector<int>>& selections,
                            const std::vector<std::vector<std::vector<int>>>& labels) {
  if (selections.size() != labels.size())
    throw DataError("association_metrics: selections and labels differ in frame count");
  long tp = 0, fp = 0, fn = 0;
  long exact = 0;
  for (std::size_t f = 0; f < selections.size(); ++f) {
    if (selections[f].size() != labels[f].size())
      throw DataError("association_metrics: channel count mismatch in frame " + std::to_string(f));
    bool all_correct = true;
    for (std::size_t n = 0; n < selections[f].size(); ++n) {
      const auto& ch_labels = labels[f][n];
      const int positives = std::accumulate(ch_labels.begin(), ch_labels.end(), 0);
      // channels without a gated GT label carry no verifiable decision
      if (positives == 0) continue;
      const int sel = selections[f][n];
      const bool hit = sel >= 0 && sel < static_cast<int>(ch_labels.size()) &&
                       ch_labels[static_cast<std::size_t>(sel)] == 1;
      if (sel >= 0) (hit ? tp : fp) += 1;
      fn += positives - (hit ? 1 : 0);
      all_correct = all_correct && hit;
    }
    exact += all_correct ? 1 : 0;
  }
  Metrics m;
  m.accuracy = static_cast<double>(exact) / static_cast<double>(selections.size());
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return m;
}

std::vector<int> associate_variant(const LabeledFrame& lf, const MlpWeights& weights,
                                   ReferenceRule ref_rule, AssociationRule assoc_rule) {
  const std::size_t n_channels = lf.features.size();
  std::vector<int> selected(n_channels, -1);
  std::size_t total = 0;
  for (const auto& ch : lf.features) total += ch.size();
  if (total == 0) return selected;

  const EchoRef ref = ref_rule == ReferenceRule::Mlp ? select_reference(lf.features, weights)
                                                     : argmax_amplitude_reference(lf.features);

  if (assoc_rule == AssociationRule::Contrastive) {
    const std::array<double, 4> ref_emb =
        mlp_forward(lf.features[ref.channel][static_cast<std::size_t>(ref.echo)].as_array(),
                    weights).embedding;
    for (std::size_t n = 0; n < n_channels; ++n) {
      if (static_cast<int>(n) == ref.channel) {
        selected[n] = ref.echo;
        continue;
      }
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < lf.features[n].size(); ++k) {
        const double d =
            dissimilarity(ref_emb, mlp_forward(lf.features[n][k].as_array(), weights).embedding);
        if (d < best_d) {
          best_d = d;
          selected[n] = static_cast<int>(k);
        }
      }
    }
    return selected;
  }

  // Munkres on absolute fitted-ToA differences between the reference channel
  // and each other channel; the echo assigned to the reference echo wins.
  const auto& ref_channel = lf.features[static_cast<std::size_t>(ref.channel)];
  for (std::size_t n = 0; n < n_channels; ++n) {
    if (static_cast<int>(n) == ref.channel) {
      selected[n] = ref.echo;
      continue;
    }
    const auto& ch = lf.features[n];
    if (ch.empty()) continue;
    const int rows = static_cast<int>(ref_channel.size());
    const int cols = static_cast<int>(ch.size());
    std::vector<double> cost(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        cost[static_cast<std::size_t>(i) * cols + j] =
            std::abs(ref_channel[i].params.mean - ch[j].params.mean);
    const std::vector<int> assignment = munkres_assign(cost, rows, cols);
    int pick = assignment[static_cast<std::size_t>(ref.echo)];
    if (pick < 0) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < cols; ++j) {
        const double c = cost[static_cast<std::size_t>(ref.echo) * cols + j];
        if (c < best) {
          best = c;
          pick = j;
        }
      }
    }
    selected[n] = pick;
  }
  return selected;
}

AblationTable run_ablation(std::span<const Frame> frames, const SensorLayout& layout,
                           const RunConfig& run_cfg, const TrainConfig& train_cfg,
                           double test_fraction) {
  if (frames.empty()) throw DataError("run_ablation: empty dataset");
  std::vector<LabeledFrame> labeled;
  labeled.reserve(frames.size());
  for (const Frame& f : frames) labeled.push_back(extract_labeled_frame(f, layout, run_cfg));

  // held-out test split
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(train_cfg.rng_seed).fork(0x7e57);
  rng.shuffle(order.data(), order.size());
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(order.size()))));
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
  std::vector<LabeledFrame> train_set;
  for (auto it = order.begin() + n_test; it != order.end(); ++it)
    train_set.push_back(labeled[*it]);
  if (train_set.empty()) throw DataError("run_ablation: no frames left for training");

  TrainConfig full_cfg = train_cfg;
  full_cfg.feature_mask = {1, 1, 1, 1, 1, 1, 1, 1};
  const MlpWeights full = train(train_set, full_cfg);

  TrainConfig reduced_cfg = train_cfg;
  reduced_cfg.feature_mask = {1, 0, 0, 0, 0, 0, 1, 0};  // amplitude and detection ToA only
  const MlpWeights reduced = train(train_set, reduced_cfg);

  struct Variant {
    const char* features;
    const char* reference;
    const char* association;
    const MlpWeights* weights;
    ReferenceRule ref_rule;
    AssociationRule assoc_rule;
  };
  const Variant variants[4] = {
      {"memg", "argmax-alpha", "munkres", &full, ReferenceRule::ArgmaxAmplitude,
       AssociationRule::MunkresToa},
      {"memg", "mlp", "munkres", &full, ReferenceRule::Mlp, AssociationRule::MunkresToa},
      {"toa-amplitude", "mlp", "contrastive", &reduced, ReferenceRule::Mlp,
       AssociationRule::Contrastive},
      {"memg", "mlp", "contrastive", &full, ReferenceRule::Mlp, AssociationRule::Contrastive},
  };

  AblationTable table;
  for (const Variant& v : variants) {
    std::vector<std::vector<int>> selections;
    std::vector<std::vector<std::vector<int>>> labels;
    for (std::size_t ti : test_idx) {
      selections.push_back(associate_variant(labeled[ti], *v.weights, v.ref_rule, v.assoc_rule));
      labels.push_back(labeled[ti].labels);
    }
    table.rows.push_back(
        {v.features, v.reference, v.association, association_metrics(selections, labels)});
  }
  return table;
}

}  // namespace echoloc
