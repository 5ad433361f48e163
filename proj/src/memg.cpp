#include "echoloc/memg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "echoloc/errors.hpp"
#include "echoloc/kernels.hpp"

namespace echoloc {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;

/// Plain Cholesky solve of the n x n SPD system; false when a pivot fails.
bool solve_spd(std::vector<double> a, std::vector<double>& b, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (!(s > 0)) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return true;
}

void clamp_params(std::vector<double>& p, const LmConfig& cfg, double window,
                  const std::vector<double>& mean_centers) {
  for (std::size_t k = 0; k + 3 < p.size(); k += 4) {
    p[k] = std::max(p[k], 0.0);  // amplitude
    double lo = -window, hi = 2.0 * window;
    if (cfg.mean_trust_radius > 0) {
      const double center = mean_centers[k / 4];
      lo = std::max(lo, center - cfg.mean_trust_radius);
      hi = std::min(hi, center + cfg.mean_trust_radius);
    }
    p[k + 1] = std::clamp(p[k + 1], lo, hi);
    p[k + 2] = std::clamp(p[k + 2], cfg.min_spread, cfg.max_spread);
    p[k + 3] = std::clamp(p[k + 3], -cfg.max_asymmetry, cfg.max_asymmetry);
  }
}

double model_energy(const std::vector<double>& p, std::span<const double> env, double t_step,
                    std::vector<double>& model, std::vector<double>& resid) {
  const std::size_t g = env.size();
  std::fill(model.begin(), model.end(), 0.0);
  for (std::size_t k = 0; k + 3 < p.size(); k += 4)
    kern::ops().emg_add(&p[k], t_step, g, model.data());
  kern::ops().subtract(env.data(), model.data(), resid.data(), g);
  return kern::ops().sum_sq(resid.data(), g);
}

struct LmRun {
  std::vector<double> params;
  double energy = 0;
  int iterations = 0;
};

LmRun lm_minimize(std::span<const double> envelope, double t_step, std::vector<double> params,
                  const std::vector<double>& mean_centers, const LmConfig& cfg) {
  const std::size_t g = envelope.size();
  const int np = static_cast<int>(params.size());
  const int n_comp = np / 4;

  std::vector<double> model(g), resid(g);
  const double window = static_cast<double>(g) * t_step;
  clamp_params(params, cfg, window, mean_centers);
  double energy = model_energy(params, envelope, t_step, model, resid);
  if (!std::isfinite(energy)) throw NumericError("fit_memg: non-finite energy at initialization");

  std::vector<double> best = params;
  double best_energy = energy;

  std::vector<double> deriv(static_cast<std::size_t>(np) * g);
  std::vector<double> jtj(static_cast<std::size_t>(np) * np);
  std::vector<double> jtr(np);
  std::vector<double> trial(np);
  std::vector<double> trial_model(g), trial_resid(g);

  double damping = cfg.initial_damping;
  int iterations = 0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    ++iterations;
    std::fill(model.begin(), model.end(), 0.0);
    for (int k = 0; k < n_comp; ++k)
      kern::ops().emg_model_jac(&params[4 * k], t_step, g, model.data(),
                                &deriv[static_cast<std::size_t>(4 * k) * g]);
    kern::ops().subtract(envelope.data(), model.data(), resid.data(), g);
    energy = kern::ops().sum_sq(resid.data(), g);
    if (!std::isfinite(energy)) throw NumericError("fit_memg: non-finite energy during fit");

    for (int a = 0; a < np; ++a) {
      const double* da = &deriv[static_cast<std::size_t>(a) * g];
      for (int b = a; b < np; ++b) {
        const double v = kern::ops().dot(da, &deriv[static_cast<std::size_t>(b) * g], g);
        jtj[a * np + b] = v;
        jtj[b * np + a] = v;
      }
      jtr[a] = kern::ops().dot(da, resid.data(), g);
    }

    double max_diag = 0;
    for (int d = 0; d < np; ++d) max_diag = std::max(max_diag, jtj[d * np + d]);

    bool accepted = false;
    while (damping < 1e12) {
      std::vector<double> a = jtj;
      // Marquardt scaling with a floor tied to the problem scale so that
      // near-dead parameter directions (a collapsed component) stay damped
      for (int d = 0; d < np; ++d)
        a[d * np + d] += damping * std::max(jtj[d * np + d], 1e-6 * max_diag + 1e-300);
      std::vector<double> step = jtr;
      if (solve_spd(std::move(a), step, np)) {
        // limit how far a component may travel per iteration: a full
        // Gauss-Newton leap across the window strands components in flat
        // regions they cannot climb back from
        double scale = 1.0;
        for (int k = 0; k < n_comp; ++k) {
          scale = std::min(scale, 2.0 / std::max(std::abs(step[4 * k + 1]), 1e-300));
          scale = std::min(scale, 1.0 / std::max(std::abs(step[4 * k + 2]), 1e-300));
        }
        for (int d = 0; d < np; ++d) trial[d] = params[d] + scale * step[d];
        clamp_params(trial, cfg, window, mean_centers);
        const double trial_energy = model_energy(trial, envelope, t_step, trial_model, trial_resid);
        if (std::isfinite(trial_energy) && trial_energy < energy) {
          const double delta = energy - trial_energy;
          params = trial;
          energy = trial_energy;
          damping = std::max(damping * 0.1, 1e-15);
          accepted = true;
          if (energy < best_energy) {
            best_energy = energy;
            best = params;
          }
          // converged only once undamped steps stop paying; a tiny delta at
          // high damping just means the trust region is still small
          if (delta < cfg.min_energy_delta && damping <= 1e-6) it = cfg.max_iterations;
          break;
        }
      }
      damping *= 10.0;
    }
    if (!accepted) break;
  }

  return {std::move(best), best_energy, iterations};
}

/// LM plus deterministic asymmetry restarts. The model has a structural
/// saddle at eta = 0: once (alpha, mu, sigma) reach their symmetric optimum,
/// the eta direction of the Jacobian is parallel to the mu direction and the
/// residual is orthogonal to both, so a first-order step cannot leave it.
/// Components that end a run with |eta| near zero are re-seeded at +-1 and
/// the energy arg-min over all runs is kept.
ChannelFit fit_from_params(std::span<const double> envelope, double t_step,
                           std::vector<double> params, std::vector<double> mean_centers,
                           std::vector<int> seeds, const LmConfig& cfg) {
  const int n_comp = static_cast<int>(params.size() / 4);
  LmRun best = lm_minimize(envelope, t_step, std::move(params), mean_centers, cfg);
  int iterations = best.iterations;

  const double escape_threshold = 1e-12;
  for (int pass = 0; pass < 3 && best.energy > escape_threshold; ++pass) {
    bool improved = false;
    for (int k = 0; k < n_comp; ++k) {
      const double eta = best.params[4 * k + 3];
      // near zero: saddle escape in both directions; otherwise probe the
      // mirrored pulse (mu shifted, -eta), which overlap bias can favor
      const double candidates[2] = {std::abs(eta) < 0.2 ? 1.0 : -eta,
                                    std::abs(eta) < 0.2 ? -1.0 : -eta};
      const int n_cand = std::abs(eta) < 0.2 ? 2 : 1;
      for (int c = 0; c < n_cand; ++c) {
        std::vector<double> restart = best.params;
        restart[4 * k + 3] = candidates[c];
        LmRun run = lm_minimize(envelope, t_step, std::move(restart), mean_centers, cfg);
        iterations += run.iterations;
        if (run.energy < best.energy - 1e-15) {
          best = std::move(run);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }

  // Components that died (amplitude pinned at the zero clamp) while real
  // signal remains unexplained are re-seeded at the residual peak.
  const double env_peak = envelope.empty() ? 0.0 : *std::max_element(envelope.begin(),
                                                                     envelope.end());
  const double env_energy = kern::ops().sum_sq(envelope.data(), envelope.size());
  for (int attempt = 0; attempt < n_comp; ++attempt) {
    if (!(best.energy > 1e-6 * std::max(env_energy, 1e-30))) break;
    int dead = -1;
    for (int k = 0; k < n_comp; ++k)
      if (best.params[4 * k] <= 1e-4 * env_peak) {
        dead = k;
        break;
      }
    if (dead < 0) break;
    // residual peak location on the fit grid
    std::vector<double> model(envelope.size(), 0.0), resid(envelope.size());
    for (int k = 0; k < n_comp; ++k)
      kern::ops().emg_add(&best.params[4 * k], t_step, model.size(), model.data());
    kern::ops().subtract(envelope.data(), model.data(), resid.data(), resid.size());
    std::size_t peak = 0;
    for (std::size_t i = 1; i < resid.size(); ++i)
      if (resid[i] > resid[peak]) peak = i;
    std::vector<double> restart = best.params;
    restart[4 * dead] = std::max(resid[peak], 1e-3 * env_peak);
    restart[4 * dead + 1] = static_cast<double>(peak) * t_step;
    restart[4 * dead + 2] = cfg.init_spread;
    restart[4 * dead + 3] = cfg.init_asymmetry;
    std::vector<double> centers = mean_centers;
    centers[dead] = restart[4 * dead + 1];
    LmRun run = lm_minimize(envelope, t_step, std::move(restart), centers, cfg);
    iterations += run.iterations;
    if (run.energy < best.energy - 1e-15) {
      best = std::move(run);
      mean_centers = std::move(centers);
    } else {
      break;
    }
  }

  ChannelFit fit;
  fit.energy = best.energy;
  fit.iterations = iterations;
  fit.seed_samples = std::move(seeds);
  fit.components.reserve(n_comp);
  for (int k = 0; k < n_comp; ++k)
    fit.components.push_back(
        {best.params[4 * k], best.params[4 * k + 1], best.params[4 * k + 2],
         best.params[4 * k + 3]});
  return fit;
}

}  // namespace

double emg_eval(const EmgParams& p, double t) {
  if (!(p.spread > 0)) throw DataError("emg_eval: spread must be positive");
  const double z = (t - p.mean) / p.spread;
  return p.amplitude * std::exp(-0.5 * z * z) * (1.0 + std::erf(p.asymmetry * z * kInvSqrt2));
}

double memg_sum(std::span<const EmgParams> components, double t) {
  double s = 0;
  for (const EmgParams& p : components) s += emg_eval(p, t);
  return s;
}

ChannelFit fit_memg(std::span<const double> envelope, std::span<const int> init_samples,
                    double t_step, const LmConfig& cfg) {
  if (init_samples.empty()) throw DataError("fit_memg: need at least one initialization ToA");
  if (envelope.size() < 4) throw DataError("fit_memg: envelope too short");
  if (!(t_step > 0)) throw DataError("fit_memg: t_step must be positive");

  std::vector<double> params;
  std::vector<double> centers;
  std::vector<int> seeds(init_samples.begin(), init_samples.end());
  params.reserve(init_samples.size() * 4);
  for (int s : init_samples) {
    const auto grid_index = static_cast<std::size_t>(
        std::clamp(std::lround(static_cast<double>(s) / t_step), 0L,
                   static_cast<long>(envelope.size() - 1)));
    params.push_back(envelope[grid_index]);
    params.push_back(static_cast<double>(s));
    params.push_back(cfg.init_spread);
    params.push_back(cfg.init_asymmetry);
    // rising-edge detections precede the fitted mean; bias the trust window
    // toward where the mean actually lands
    centers.push_back(static_cast<double>(s) + 3.0);
  }
  return fit_from_params(envelope, t_step, std::move(params), std::move(centers),
                         std::move(seeds), cfg);
}

ChannelFit fit_memg_from_params(std::span<const double> envelope,
                                std::span<const EmgParams> initial, double t_step,
                                const LmConfig& cfg) {
  if (initial.empty()) throw DataError("fit_memg_from_params: need at least one component");
  if (envelope.size() < 4) throw DataError("fit_memg_from_params: envelope too short");
  std::vector<double> params;
  std::vector<double> centers;
  std::vector<int> seeds;
  params.reserve(initial.size() * 4);
  for (const EmgParams& p : initial) {
    params.push_back(p.amplitude);
    params.push_back(p.mean);
    params.push_back(p.spread);
    params.push_back(p.asymmetry);
    centers.push_back(p.mean);
    seeds.push_back(static_cast<int>(std::lround(p.mean)));
  }
  return fit_from_params(envelope, t_step, std::move(params), std::move(centers),
                         std::move(seeds), cfg);
}

double echo_power(const EmgParams& p, int n_samples) {
  if (n_samples <= 0) return 0;
  std::vector<double> model(static_cast<std::size_t>(n_samples), 0.0);
  const double raw[4] = {p.amplitude, p.mean, p.spread, p.asymmetry};
  kern::ops().emg_add(raw, 1.0, model.size(), model.data());
  return kern::ops().sum(model.data(), model.size());
}

std::vector<EchoFeature> assemble_features(const ChannelFit& fit, std::span<const double> envelope,
                                           double t_step, int n_samples) {
  const std::size_t g = envelope.size();
  std::vector<double> model(g, 0.0);
  for (const EmgParams& p : fit.components) {
    const double raw[4] = {p.amplitude, p.mean, p.spread, p.asymmetry};
    kern::ops().emg_add(raw, t_step, g, model.data());
  }
  std::vector<double> resid(g);
  kern::ops().subtract(envelope.data(), model.data(), resid.data(), g);

  const double total_energy = kern::ops().sum_sq(envelope.data(), g);
  const double total_resid = kern::ops().sum_sq(resid.data(), g);
  double frame_conf;
  if (total_energy > 0)
    frame_conf = std::clamp(1.0 - total_resid / total_energy, 0.0, 1.0);
  else
    frame_conf = total_resid == 0 ? 1.0 : 0.0;

  std::vector<EchoFeature> features;
  features.reserve(fit.components.size());
  for (std::size_t k = 0; k < fit.components.size(); ++k) {
    const EmgParams& p = fit.components[k];
    const double lo_d = std::max(0.0, std::ceil((p.mean - 3.0 * p.spread) / t_step));
    const double hi_d =
        std::min(static_cast<double>(g) - 1.0, std::floor((p.mean + 3.0 * p.spread) / t_step));
    double local_energy = 0, local_resid = 0;
    if (hi_d >= lo_d && lo_d < static_cast<double>(g)) {
      const auto lo = static_cast<std::size_t>(lo_d);
      const auto hi = static_cast<std::size_t>(hi_d);
      local_energy = kern::ops().sum_sq(envelope.data() + lo, hi - lo + 1);
      local_resid = kern::ops().sum_sq(resid.data() + lo, hi - lo + 1);
    }
    double echo_conf;
    if (local_energy > 0)
      echo_conf = std::clamp(1.0 - local_resid / local_energy, 0.0, 1.0);
    else
      echo_conf = local_resid == 0 ? 1.0 : 0.0;

    EchoFeature f;
    f.params = p;
    f.echo_confidence = echo_conf;
    f.power = echo_power(p, n_samples);
    f.toa_samples = k < fit.seed_samples.size() ? static_cast<double>(fit.seed_samples[k])
                                                : std::round(p.mean);
    f.frame_confidence = frame_conf;
    features.push_back(f);
  }
  return features;
}

}  // namespace echoloc
