#include "echoloc/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "echoloc/errors.hpp"
#include "echoloc/kernels.hpp"
#include "echoloc/rng.hpp"

namespace echoloc {
namespace {

constexpr int kIn = 8, kH1 = 32, kH2 = 32, kEmb = 4;
constexpr double kScoreClamp = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ForwardCache {
  std::array<double, 8> x;
  std::array<double, kH1> a1, h1;
  std::array<double, kH2> a2, h2;
  std::array<double, kEmb> a3, h3;
  double logit = 0, score = 0;
};

void standardize(const std::array<double, 8>& raw, const MlpWeights& w, std::array<double, 8>& out) {
  for (int i = 0; i < 8; ++i) out[i] = (raw[i] - w.feature_mean[i]) / w.feature_std[i];
}

void forward_cached(const std::array<double, 8>& raw, const MlpWeights& w, ForwardCache& c) {
  standardize(raw, w, c.x);
  kern::ops().dense_forward(w.w1.data(), w.b1.data(), c.x.data(), kIn, kH1, c.a1.data());
  for (int i = 0; i < kH1; ++i) c.h1[i] = c.a1[i] > 0 ? c.a1[i] : 0.0;
  kern::ops().dense_forward(w.w2.data(), w.b2.data(), c.h1.data(), kH1, kH2, c.a2.data());
  for (int i = 0; i < kH2; ++i) c.h2[i] = c.a2[i] > 0 ? c.a2[i] : 0.0;
  kern::ops().dense_forward(w.w3.data(), w.b3.data(), c.h2.data(), kH2, kEmb, c.a3.data());
  for (int i = 0; i < kEmb; ++i) c.h3[i] = c.a3[i] > 0 ? c.a3[i] : 0.0;
  double logit = w.b4[0];
  logit += kern::ops().dot(w.w4.data(), c.h3.data(), kEmb);
  c.logit = logit;
  c.score = sigmoid(logit);
}

struct Gradients {
  std::vector<double> w1, w2, w3, w4, b1, b2, b3, b4;
  explicit Gradients(const MlpWeights& w)
      : w1(w.w1.size(), 0.0), w2(w.w2.size(), 0.0), w3(w.w3.size(), 0.0), w4(w.w4.size(), 0.0),
        b1(w.b1.size(), 0.0), b2(w.b2.size(), 0.0), b3(w.b3.size(), 0.0), b4(w.b4.size(), 0.0) {}
  void reset() {
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(w1); zero(w2); zero(w3); zero(w4);
    zero(b1); zero(b2); zero(b3); zero(b4);
  }
};

/// Backprop of one echo given the embedding gradient and the logit gradient.
void backward_cached(const ForwardCache& c, const MlpWeights& w,
                     const std::array<double, kEmb>& demb, double dlogit, Gradients& g) {
  std::array<double, kEmb> dh3;
  for (int i = 0; i < kEmb; ++i) {
    g.w4[i] += c.h3[i] * dlogit;
    dh3[i] = w.w4[i] * dlogit + demb[i];
  }
  g.b4[0] += dlogit;
  std::array<double, kEmb> da3;
  for (int i = 0; i < kEmb; ++i) da3[i] = c.a3[i] > 0 ? dh3[i] : 0.0;
  std::array<double, kH2> dh2;
  kern::ops().dense_backward(w.w3.data(), c.h2.data(), da3.data(), kH2, kEmb, dh2.data(),
                             g.w3.data(), g.b3.data());
  std::array<double, kH2> da2;
  for (int i = 0; i < kH2; ++i) da2[i] = c.a2[i] > 0 ? dh2[i] : 0.0;
  std::array<double, kH1> dh1;
  kern::ops().dense_backward(w.w2.data(), c.h1.data(), da2.data(), kH1, kH2, dh1.data(),
                             g.w2.data(), g.b2.data());
  std::array<double, kH1> da1;
  for (int i = 0; i < kH1; ++i) da1[i] = c.a1[i] > 0 ? dh1[i] : 0.0;
  kern::ops().dense_backward(w.w1.data(), c.x.data(), da1.data(), kIn, kH1, nullptr, g.w1.data(),
                             g.b1.data());
}

struct FlatEcho {
  int channel, echo, label;
};

/// Forward pass plus the combined frame loss; fills per-echo logit and
/// embedding gradients when grads is non-null.
double frame_loss(const LabeledFrame& lf, const MlpWeights& w, double lambda_c, double lambda_b,
                  double q, const std::array<double, 8>& mask, std::vector<ForwardCache>* caches,
                  std::vector<double>* dlogits, std::vector<std::array<double, kEmb>>* dembs,
                  std::vector<FlatEcho>* flat_out) {
  std::vector<FlatEcho> flat;
  std::vector<ForwardCache> local_caches;
  for (std::size_t n = 0; n < lf.features.size(); ++n) {
    for (std::size_t k = 0; k < lf.features[n].size(); ++k) {
      flat.push_back({static_cast<int>(n), static_cast<int>(k), lf.labels[n][k]});
      std::array<double, 8> raw = lf.features[n][k].as_array();
      for (int i = 0; i < 8; ++i) raw[i] *= mask[i];
      ForwardCache c;
      forward_cached(raw, w, c);
      local_caches.push_back(c);
    }
  }
  const std::size_t m = flat.size();
  double lb = 0;
  std::vector<double> dl(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double b = std::clamp(local_caches[i].score, kScoreClamp, 1.0 - kScoreClamp);
    const int y = flat[i].label;
    lb += -(y * std::log(b) + (1 - y) * std::log(1.0 - b));
    dl[i] = local_caches[i].score - y;
  }
  double lc = 0;
  std::vector<std::array<double, kEmb>> de(m, std::array<double, kEmb>{});
  for (std::size_t r = 0; r < m; ++r) {
    if (flat[r].label != 1) continue;
    for (std::size_t i = 0; i < m; ++i) {
      if (flat[i].channel == flat[r].channel) continue;
      std::array<double, kEmb> diff;
      double d2 = 0;
      for (int c = 0; c < kEmb; ++c) {
        diff[c] = local_caches[r].h3[c] - local_caches[i].h3[c];
        d2 += diff[c] * diff[c];
      }
      // pair-dissimilarity label into the printed contrastive form
      const int yd = 1 - flat[i].label;
      if (yd == 0) {
        lc += 0.5 * d2;
        for (int c = 0; c < kEmb; ++c) {
          de[r][c] += diff[c];
          de[i][c] -= diff[c];
        }
      } else if (d2 < q) {
        lc += 0.5 * (q - d2);
        for (int c = 0; c < kEmb; ++c) {
          de[r][c] -= diff[c];
          de[i][c] += diff[c];
        }
      }
    }
  }
  if (caches) *caches = std::move(local_caches);
  if (dlogits) {
    dlogits->resize(m);
    for (std::size_t i = 0; i < m; ++i) (*dlogits)[i] = lambda_b * dl[i];
  }
  if (dembs) {
    dembs->resize(m);
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < kEmb; ++c) (*dembs)[i][c] = lambda_c * de[i][c];
  }
  if (flat_out) *flat_out = std::move(flat);
  return lambda_c * lc + lambda_b * lb;
}

struct AdamState {
  Gradients m, v;
  explicit AdamState(const MlpWeights& w) : m(w), v(w) {}
};

void adam_update(MlpWeights& w, AdamState& st, const Gradients& g, double lr, int t) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  auto step = [&](std::vector<double>& wv, std::vector<double>& mv, std::vector<double>& vv,
                  const std::vector<double>& gv) {
    kern::ops().adam_step(wv.data(), mv.data(), vv.data(), gv.data(), wv.size(), lr, b1, b2, eps,
                          bias1, bias2);
  };
  step(w.w1, st.m.w1, st.v.w1, g.w1);
  step(w.w2, st.m.w2, st.v.w2, g.w2);
  step(w.w3, st.m.w3, st.v.w3, g.w3);
  step(w.w4, st.m.w4, st.v.w4, g.w4);
  step(w.b1, st.m.b1, st.v.b1, g.b1);
  step(w.b2, st.m.b2, st.v.b2, g.b2);
  step(w.b3, st.m.b3, st.v.b3, g.b3);
  step(w.b4, st.m.b4, st.v.b4, g.b4);
}

}  // namespace

MlpWeights MlpWeights::zeros() {
  MlpWeights w;
  w.w1.assign(kIn * kH1, 0.0);
  w.w2.assign(kH1 * kH2, 0.0);
  w.w3.assign(kH2 * kEmb, 0.0);
  w.w4.assign(kEmb * 1, 0.0);
  w.b1.assign(kH1, 0.0);
  w.b2.assign(kH2, 0.0);
  w.b3.assign(kEmb, 0.0);
  w.b4.assign(1, 0.0);
  return w;
}

std::size_t MlpWeights::parameter_count() const {
  return w1.size() + w2.size() + w3.size() + w4.size() + b1.size() + b2.size() + b3.size() +
         b4.size();
}

void MlpWeights::validate() const {
  auto check = [](const std::vector<double>& v, std::size_t n, const char* name) {
    if (v.size() != n)
      throw DataError(std::string("weights: ") + name + " has wrong size " +
                      std::to_string(v.size()) + ", expected " + std::to_string(n));
    for (double x : v)
      if (!std::isfinite(x)) throw DataError(std::string("weights: non-finite value in ") + name);
  };
  check(w1, kIn * kH1, "w1");
  check(w2, kH1 * kH2, "w2");
  check(w3, kH2 * kEmb, "w3");
  check(w4, kEmb, "w4");
  check(b1, kH1, "b1");
  check(b2, kH2, "b2");
  check(b3, kEmb, "b3");
  check(b4, 1, "b4");
  for (double s : feature_std)
    if (!(s > 0)) throw DataError("weights: feature_std entries must be positive");
  if (!(margin_q > 0)) throw DataError("weights: margin_q must be positive");
}

MlpOut mlp_forward(const std::array<double, 8>& feature, const MlpWeights& w) {
  ForwardCache c;
  forward_cached(feature, w, c);
  return {c.score, c.h3};
}

double bce_loss(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DataError("bce_loss: label/score length mismatch");
  double loss = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double b = std::clamp(scores[i], kScoreClamp, 1.0 - kScoreClamp);
    loss += -(labels[i] * std::log(b) + (1 - labels[i]) * std::log(1.0 - b));
  }
  return loss;
}

double dissimilarity(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  double d2 = 0;
  for (int i = 0; i < 4; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d2);
}

double contrastive_loss(std::span<const int> labels, std::span<const double> distances, double q) {
  if (!(q > 0)) throw DataError("contrastive_loss: margin must be positive");
  if (labels.size() != distances.size())
    throw DataError("contrastive_loss: label/distance length mismatch");
  double loss = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d2 = distances[i] * distances[i];
    loss += 0.5 * (1 - labels[i]) * d2 + 0.5 * labels[i] * std::max(0.0, q - d2);
  }
  return loss;
}

double total_loss(double contrastive, double bce, double lambda_c, double lambda_b) {
  return lambda_c * contrastive + lambda_b * bce;
}

EchoRef select_reference(const FrameFeatures& features, const MlpWeights& w) {
  EchoRef best;
  double best_score = 0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    for (std::size_t k = 0; k < features[n].size(); ++k) {
      const double s = mlp_forward(features[n][k].as_array(), w).score;
      const bool better = w.arg_convention == ArgConvention::Min ? s < best_score : s > best_score;
      if (best.channel < 0 || better) {
        best = {static_cast<int>(n), static_cast<int>(k)};
        best_score = s;
      }
    }
  }
  if (best.channel < 0) throw DataError("select_reference: no echoes in frame");
  return best;
}

EchoRef argmax_amplitude_reference(const FrameFeatures& features) {
  EchoRef best;
  double best_amp = 0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    for (std::size_t k = 0; k < features[n].size(); ++k) {
      const double a = features[n][k].params.amplitude;
      if (best.channel < 0 || a > best_amp) {
        best = {static_cast<int>(n), static_cast<int>(k)};
        best_amp = a;
      }
    }
  }
  if (best.channel < 0) throw DataError("argmax_amplitude_reference: no echoes in frame");
  return best;
}

Correspondence match_echoes(const FrameFeatures& features, const MlpWeights& w) {
  Correspondence corr;
  corr.reference = select_reference(features, w);
  const std::size_t n_channels = features.size();
  corr.matched.assign(n_channels, -1);
  corr.dissimilarities.assign(n_channels, std::numeric_limits<double>::infinity());
  corr.scores.resize(n_channels);

  std::vector<std::vector<std::array<double, 4>>> embeddings(n_channels);
  for (std::size_t n = 0; n < n_channels; ++n) {
    embeddings[n].resize(features[n].size());
    corr.scores[n].resize(features[n].size());
    for (std::size_t k = 0; k < features[n].size(); ++k) {
      const MlpOut out = mlp_forward(features[n][k].as_array(), w);
      embeddings[n][k] = out.embedding;
      corr.scores[n][k] = out.score;
    }
  }
  const auto& ref_emb =
      embeddings[corr.reference.channel][static_cast<std::size_t>(corr.reference.echo)];
  for (std::size_t n = 0; n < n_channels; ++n) {
    if (static_cast<int>(n) == corr.reference.channel) {
      corr.matched[n] = corr.reference.echo;
      corr.dissimilarities[n] = 0.0;
      continue;
    }
    for (std::size_t k = 0; k < features[n].size(); ++k) {
      const double d = dissimilarity(ref_emb, embeddings[n][k]);
      if (d < corr.dissimilarities[n]) {
        corr.dissimilarities[n] = d;
        corr.matched[n] = static_cast<int>(k);
      }
    }
  }
  return corr;
}

std::vector<int> munkres_assign(const std::vector<double>& cost, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw DataError("munkres_assign: empty cost matrix");
  if (static_cast<int>(cost.size()) != rows * cols)
    throw DataError("munkres_assign: cost size does not match dimensions");
  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  auto at = [&](int i, int j) { return transposed ? cost[j * cols + i] : cost[i * cols + j]; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(rows, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed)
      row_to_col[j - 1] = p[j] - 1;
    else
      row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

std::string to_string(ArgConvention c) { return c == ArgConvention::Min ? "min" : "max"; }

ArgConvention arg_convention_from_string(const std::string& s) {
  if (s == "min") return ArgConvention::Min;
  if (s == "max") return ArgConvention::Max;
  throw DataError("unknown arg convention '" + s + "' (expected \"min\" or \"max\")");
}

double training_frame_loss(const LabeledFrame& frame, const MlpWeights& weights,
                           const TrainConfig& cfg, MlpWeights* param_grads) {
  if (!param_grads)
    return frame_loss(frame, weights, cfg.lambda_c, cfg.lambda_b, cfg.margin_q, cfg.feature_mask,
                      nullptr, nullptr, nullptr, nullptr);
  std::vector<ForwardCache> caches;
  std::vector<double> dlogits;
  std::vector<std::array<double, kEmb>> dembs;
  const double loss = frame_loss(frame, weights, cfg.lambda_c, cfg.lambda_b, cfg.margin_q,
                                 cfg.feature_mask, &caches, &dlogits, &dembs, nullptr);
  Gradients grads(weights);
  for (std::size_t i = 0; i < caches.size(); ++i)
    backward_cached(caches[i], weights, dembs[i], dlogits[i], grads);
  param_grads->w1 = std::move(grads.w1);
  param_grads->w2 = std::move(grads.w2);
  param_grads->w3 = std::move(grads.w3);
  param_grads->w4 = std::move(grads.w4);
  param_grads->b1 = std::move(grads.b1);
  param_grads->b2 = std::move(grads.b2);
  param_grads->b3 = std::move(grads.b3);
  param_grads->b4 = std::move(grads.b4);
  return loss;
}

MlpWeights train(std::span<const LabeledFrame> dataset, const TrainConfig& cfg,
                 TrainHistory* history) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  if (!(cfg.learning_rate > 0)) throw DataError("train: learning rate must be positive");
  if (!(cfg.margin_q > 0)) throw DataError("train: margin must be positive");
  bool any_positive = false;
  for (const LabeledFrame& lf : dataset)
    for (const auto& ch : lf.labels)
      for (int y : ch) any_positive |= (y == 1);
  if (!any_positive) throw DataError("train: dataset has no positive labels");

  Rng rng(cfg.rng_seed);

  // split
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.data(), order.size());
  const auto n_val = static_cast<std::size_t>(
      std::lround(cfg.validation_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  if (train_idx.empty()) throw DataError("train: no frames left after validation split");

  // standardization from the training split (after masking)
  MlpWeights w = MlpWeights::zeros();
  w.arg_convention = cfg.arg_convention;
  w.margin_q = cfg.margin_q;
  {
    std::array<double, 8> mean{}, var{};
    std::size_t count = 0;
    for (std::size_t fi : train_idx)
      for (const auto& ch : dataset[fi].features)
        for (const EchoFeature& f : ch) {
          const auto raw = f.as_array();
          for (int i = 0; i < 8; ++i) mean[i] += raw[i] * cfg.feature_mask[i];
          ++count;
        }
    if (count == 0) throw DataError("train: dataset has no echoes");
    for (int i = 0; i < 8; ++i) mean[i] /= static_cast<double>(count);
    for (std::size_t fi : train_idx)
      for (const auto& ch : dataset[fi].features)
        for (const EchoFeature& f : ch) {
          const auto raw = f.as_array();
          for (int i = 0; i < 8; ++i) {
            const double d = raw[i] * cfg.feature_mask[i] - mean[i];
            var[i] += d * d;
          }
        }
    for (int i = 0; i < 8; ++i) {
      w.feature_mean[i] = mean[i];
      // masked dimensions standardize to ~0 regardless of the raw input
      w.feature_std[i] = cfg.feature_mask[i] == 0.0
                             ? 1e30
                             : std::max(std::sqrt(var[i] / static_cast<double>(count)), 1e-9);
    }
  }

  // Glorot-uniform init
  auto init_layer = [&](std::vector<double>& wv, int fan_in, int fan_out) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : wv) x = rng.uniform(-lim, lim);
  };
  init_layer(w.w1, kIn, kH1);
  init_layer(w.w2, kH1, kH2);
  init_layer(w.w3, kH2, kEmb);
  init_layer(w.w4, kEmb, 1);

  AdamState adam(w);
  Gradients grads(w);
  int adam_t = 0;

  MlpWeights best = w;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int patience = 0;

  auto eval_split = [&](const std::vector<std::size_t>& idx) {
    double loss = 0;
    for (std::size_t fi : idx)
      loss += frame_loss(dataset[fi], w, cfg.lambda_c, cfg.lambda_b, cfg.margin_q,
                         cfg.feature_mask, nullptr, nullptr, nullptr, nullptr);
    return loss;
  };

  TrainHistory local_history;
  TrainHistory& hist = history ? *history : local_history;
  hist = {};

  std::vector<ForwardCache> caches;
  std::vector<double> dlogits;
  std::vector<std::array<double, kEmb>> dembs;
  std::vector<FlatEcho> flat;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx.data(), train_idx.size());
    double train_total = 0;
    for (std::size_t fi : train_idx) {
      grads.reset();
      train_total += frame_loss(dataset[fi], w, cfg.lambda_c, cfg.lambda_b, cfg.margin_q,
                                cfg.feature_mask, &caches, &dlogits, &dembs, &flat);
      for (std::size_t i = 0; i < caches.size(); ++i)
        backward_cached(caches[i], w, dembs[i], dlogits[i], grads);
      adam_update(w, adam, grads, cfg.learning_rate, ++adam_t);
    }
    const double val = val_idx.empty() ? train_total : eval_split(val_idx);
    hist.train_loss.push_back(train_total);
    hist.val_loss.push_back(val);
    hist.epochs_run = epoch + 1;
    if (val < best_val - cfg.early_stop_min_delta) {
      best_val = val;
      best = w;
      best_epoch = epoch;
      patience = 0;
    } else if (++patience >= cfg.early_stop_tolerance) {
      break;
    }
  }
  hist.best_epoch = best_epoch;
  return best;
}

}  // namespace echoloc
