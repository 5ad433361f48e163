#pragma once

#include <array>
#include <span>
#include <vector>

namespace echoloc {

/// Exponentially modified Gaussian echo component. mean/spread are in
/// sample units.
struct EmgParams {
  double amplitude = 0;  // >= 0
  double mean = 0;
  double spread = 1;     // > 0
  double asymmetry = 0;
};

/// alpha * exp(-(t-mu)^2 / (2 sigma^2)) * (1 + erf(eta (t-mu) / (sigma sqrt 2)))
double emg_eval(const EmgParams& p, double t);

/// Sum of emg_eval over components; empty list yields 0.
double memg_sum(std::span<const EmgParams> components, double t);

struct LmConfig {
  double initial_damping = 1e-3;   // x10 on rejected step, /10 on accepted
  int max_iterations = 100;
  double min_energy_delta = 1e-12;
  double min_spread = 0.25;        // sigma clamp, samples
  double max_spread = 4.0;         // sigma clamp; a wider skewed component can
                                   // swallow two adjacent pulses as one blob
  double max_asymmetry = 6.0;      // |eta| clamp; beyond this erf saturates
                                   // and its gradient vanishes
  double mean_trust_radius = 6.0;  // each component's mean stays within this
                                   // many samples of its seed; keeps
                                   // components from deserting their pulse
  double init_spread = 2.0;
  double init_asymmetry = 0.0;
};

/// Per-channel fit result: K components plus the residual energy they leave.
struct ChannelFit {
  std::vector<EmgParams> components;
  std::vector<int> seed_samples;  // detection sample that seeded each component
  double energy = 0;              // ||envelope - model||^2 at the returned params
  int iterations = 0;
};

/// Levenberg-Marquardt fit of K = init_samples.size() components to an
/// envelope sampled at t = i * t_step. Initialization per component:
/// mu = seed sample, alpha = envelope there, sigma/eta from cfg. Returns the
/// minimum-energy iterate. Throws DataError when no seeds are given and
/// NumericError when the energy turns non-finite.
ChannelFit fit_memg(std::span<const double> envelope, std::span<const int> init_samples,
                    double t_step = 1.0, const LmConfig& cfg = {});

/// Same minimization from explicit initial components (refits, warm starts).
ChannelFit fit_memg_from_params(std::span<const double> envelope,
                                std::span<const EmgParams> initial, double t_step = 1.0,
                                const LmConfig& cfg = {});

/// Sum of the component model over the T integer sample positions.
double echo_power(const EmgParams& p, int n_samples);

/// 8-component echo descriptor: fitted params, per-echo confidence, power,
/// seeding ToA (samples) and per-channel frame confidence.
struct EchoFeature {
  EmgParams params;
  double echo_confidence = 0;   // in [0, 1]
  double power = 0;             // >= 0
  double toa_samples = 0;
  double frame_confidence = 0;  // in [0, 1]

  std::array<double, 8> as_array() const {
    return {params.amplitude, params.mean,  params.spread, params.asymmetry,
            echo_confidence,  power,        toa_samples,   frame_confidence};
  }
};

/// Packs features for every fitted component. Confidences are residual
/// based: frame confidence 1 - energy/||envelope||^2, echo confidence the
/// same ratio restricted to mu_k +- 3 sigma_k; both clamped to [0, 1].
/// `envelope` and `t_step` must match the fit inputs; n_samples is the
/// native window length used for echo power.
std::vector<EchoFeature> assemble_features(const ChannelFit& fit, std::span<const double> envelope,
                                           double t_step, int n_samples);

}  // namespace echoloc
