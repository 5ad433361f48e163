#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "echoloc/memg.hpp"

namespace echoloc {

inline constexpr std::array<int, 5> kMlpDims{8, 32, 32, 4, 1};

enum class ArgConvention { Min, Max };

/// Shared Siamese MLP weights (8-32-32-4-1, row-major [in x out]) together
/// with the feature standardization fitted on the training set.
struct MlpWeights {
  std::vector<double> w1, w2, w3, w4;
  std::vector<double> b1, b2, b3, b4;
  std::array<double, 8> feature_mean{};
  std::array<double, 8> feature_std{1, 1, 1, 1, 1, 1, 1, 1};
  ArgConvention arg_convention = ArgConvention::Min;
  double margin_q = 1.0;

  static MlpWeights zeros();
  std::size_t parameter_count() const;
  void validate() const;  // throws DataError on wrong dimensions / non-finite
};

struct MlpOut {
  double score = 0;                   // sigmoid output in (0, 1)
  std::array<double, 4> embedding{};  // post-ReLU third-layer activations
};

/// Forward pass on one standardized-on-the-fly feature vector.
MlpOut mlp_forward(const std::array<double, 8>& feature, const MlpWeights& w);

/// Sum of -(Y log b + (1-Y) log(1-b)); scores are clamped to
/// [1e-7, 1 - 1e-7] first.
double bce_loss(std::span<const int> labels, std::span<const double> scores);

/// Euclidean distance between two embeddings.
double dissimilarity(const std::array<double, 4>& a, const std::array<double, 4>& b);

/// Sum of (1-Y) d^2/2 + Y max(0, q - d^2)/2, exactly as printed.
double contrastive_loss(std::span<const int> labels, std::span<const double> distances, double q);

double total_loss(double contrastive, double bce, double lambda_c, double lambda_b);

struct EchoRef {
  int channel = -1;
  int echo = -1;
  bool operator==(const EchoRef&) const = default;
};

/// Per-frame echo features: one vector per channel (channels may be empty).
using FrameFeatures = std::vector<std::vector<EchoFeature>>;

/// Arg-extremum of the MLP score over all echoes, per w.arg_convention;
/// ties break lexicographically on (channel, echo). Throws DataError when
/// no echoes exist.
EchoRef select_reference(const FrameFeatures& features, const MlpWeights& w);

/// Echo with the largest amplitude scale; lexicographic tie-break.
EchoRef argmax_amplitude_reference(const FrameFeatures& features);

struct Correspondence {
  EchoRef reference;
  std::vector<int> matched;            // per channel; -1 for empty channels
  std::vector<double> dissimilarities; // per channel; 0 on the reference channel
  std::vector<std::vector<double>> scores;  // per channel per echo
};

/// Per channel the echo minimizing embedding dissimilarity to the selected
/// reference; the reference channel maps to the reference itself (d = 0).
Correspondence match_echoes(const FrameFeatures& features, const MlpWeights& w);

/// Minimum-total-cost one-to-one assignment on a rectangular nonnegative
/// cost matrix (row-major rows x cols). Returns the assigned column per row,
/// -1 for unassigned rows when rows > cols.
std::vector<int> munkres_assign(const std::vector<double>& cost, int rows, int cols);

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size_frames = 1;
  double lambda_c = 1.0;
  double lambda_b = 10.0;
  double margin_q = 1.0;
  int early_stop_tolerance = 5;      // epochs without val improvement
  double early_stop_min_delta = 0.0;
  int max_epochs = 200;
  double validation_fraction = 0.3;
  std::uint64_t rng_seed = 0;
  // Stored into the trained weights. The trained classifier drives b toward
  // the labels, so Max is the convention consistent with the BCE objective.
  ArgConvention arg_convention = ArgConvention::Max;
  // Multiplied into features before standardization (ablation variants).
  std::array<double, 8> feature_mask{1, 1, 1, 1, 1, 1, 1, 1};
};

struct LabeledFrame {
  FrameFeatures features;
  std::vector<std::vector<int>> labels;  // parallel to features, values {0,1}
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, summed over frames
  std::vector<double> val_loss;
  int best_epoch = -1;
  int epochs_run = 0;
};

/// Adam-trained shared weights with per-frame backpropagation and early
/// stopping on the validation total loss; returns the best-validation
/// weights. Deterministic given cfg.rng_seed. Throws DataError when the
/// dataset holds no positive labels.
MlpWeights train(std::span<const LabeledFrame> dataset, const TrainConfig& cfg,
                 TrainHistory* history = nullptr);

/// Total training objective of one frame (lambda_c L_C + lambda_b L_B with
/// the trainer's GT-reference pairing). When `param_grads` is given, the
/// analytic parameter gradients are accumulated into its weight/bias arrays
/// (feature stats and conventions are left untouched). Exposed for gradient
/// checks.
double training_frame_loss(const LabeledFrame& frame, const MlpWeights& weights,
                           const TrainConfig& cfg, MlpWeights* param_grads = nullptr);

std::string to_string(ArgConvention c);
ArgConvention arg_convention_from_string(const std::string& s);

}  // namespace echoloc
