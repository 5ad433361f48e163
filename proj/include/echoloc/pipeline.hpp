#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echoloc/correspondence.hpp"
#include "echoloc/intersection.hpp"
#include "echoloc/signal.hpp"
#include "echoloc/simulator.hpp"

namespace echoloc {

struct RunConfig {
  double rel_threshold = 0.1;           // tau = rel * max envelope gradient per channel
  std::optional<double> abs_threshold;  // overrides the relative rule when set
  int fit_interpolation = 2;            // analytic-envelope band interpolation factor
  double label_gate_samples = 2.0;
  SolverConfig solver;
  LmConfig lm;
};

struct LocalizationRecord {
  std::optional<Vec3> gt;  // meters
  Vec3 estimate;           // meters
  double rmse_mm = 0;      // 1000 * |estimate - gt|, when gt present
  double rmse_percent = 0; // 100 * |estimate - gt| / |gt|, when |gt| > 0
  bool converged = false;
  Correspondence correspondence;
};

/// Full per-frame chain: detect -> fit -> features -> reference/match ->
/// ellipsoids from matched echoes -> intersect. Throws DataError when fewer
/// than 3 channels end up with a matched echo.
LocalizationRecord localize_frame(const Frame& frame, const SensorLayout& layout,
                                  const MlpWeights& weights, const RunConfig& cfg = {});

/// Per-channel features plus GT-projected labels for one frame.
LabeledFrame extract_labeled_frame(const Frame& frame, const SensorLayout& layout,
                                   const RunConfig& cfg = {});

/// Removes channels whose GT projection failed the label gate (their target
/// echo would otherwise enter training as a wrong negative) and frames left
/// with fewer than two labeled channels.
void prune_unlabeled_channels(std::vector<LabeledFrame>& frames);

struct ReportRow {
  Vec3 gt_mm;
  Vec3 estimate_mm;
  double rmse_mm = 0;
  double rmse_percent = 0;
  bool converged = true;
};

struct Report {
  std::vector<ReportRow> rows;
  double mean_mm = 0, std_mm = 0;       // population std
  double mean_percent = 0, std_percent = 0;
};

/// Table-style error report; requires GT on every record. Throws DataError
/// on empty input.
Report rmse_report(std::span<const LocalizationRecord> records);
Report rmse_report_from_rows(std::vector<ReportRow> rows);

/// CSV rendering: header x,y,z,x_star,y_star,z_star,rmse_mm,rmse_pct,converged
/// followed by the rows and trailing MEAN / STD summary lines.
std::string report_to_csv(const Report& report);
std::string report_to_text(const Report& report);

struct Metrics {
  double accuracy = 0;  // exact-match fraction of per-frame correspondence sets
  double f1 = 0;        // over per-echo binary decisions
};

/// selections[f][n] is the chosen echo per frame/channel (-1 none);
/// labels[f][n][k] the GT indicator per echo. Throws DataError on length
/// mismatch.
Metrics association_metrics(const std::vector<std::vector<int>>& selections,
                            const std::vector<std::vector<std::vector<int>>>& labels);

enum class ReferenceRule { Mlp, ArgmaxAmplitude };
enum class AssociationRule { Contrastive, MunkresToa };

struct AblationRow {
  std::string features;     // "memg" or "toa-amplitude"
  std::string reference;    // "mlp" or "argmax-alpha"
  std::string association;  // "contrastive" or "munkres"
  Metrics metrics;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // fixed order: the four studied variants
};

/// Trains and evaluates the four correspondence variants on a labeled
/// dataset with a held-out test split. Throws DataError when frames lack GT.
AblationTable run_ablation(std::span<const Frame> frames, const SensorLayout& layout,
                           const RunConfig& run_cfg, const TrainConfig& train_cfg,
                           double test_fraction = 0.3);

/// Association decisions for one labeled frame under a variant pair.
std::vector<int> associate_variant(const LabeledFrame& lf, const MlpWeights& weights,
                                   ReferenceRule ref_rule, AssociationRule assoc_rule);

}  // namespace echoloc
