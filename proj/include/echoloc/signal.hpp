#pragma once

#include <optional>
#include <span>
#include <vector>

#include "echoloc/vec3.hpp"

namespace echoloc {

/// N channels x T amplitude samples from one acquisition.
struct Frame {
  std::vector<std::vector<double>> channels;
  double sample_rate = 22000.0;  // Hz
  std::optional<Vec3> gt_position;

  int n_receivers() const { return static_cast<int>(channels.size()); }
  int n_samples() const { return channels.empty() ? 0 : static_cast<int>(channels[0].size()); }
  /// Throws DataError unless all channels share one length, N >= 3, fs > 0.
  void validate() const;
};

struct ToaDetection {
  int channel = 0;
  int sample_index = 0;
  double toa = 0;             // seconds, sample_index / sample_rate
  double envelope_value = 0;  // envelope at the detection sample
};

/// Magnitude of the discrete analytic signal (frequency-domain method:
/// keep DC and Nyquist, double positive bins, zero negative bins).
std::vector<double> hilbert_envelope(std::span<const double> samples);

/// Analytic-signal magnitude band-interpolated by an integer factor
/// (one-sided spectrum zero-padding). factor == 1 equals hilbert_envelope.
std::vector<double> hilbert_envelope_interpolated(std::span<const double> samples, int factor);

/// Rising-edge detection on the forward difference of the envelope: one
/// detection per contiguous run of gradient samples above tau, sorted by
/// ToA. tau must be > 0.
std::vector<std::vector<ToaDetection>> detect_toas(const Frame& frame, double tau);

/// Same with a per-channel relative threshold tau_n = rel * max gradient.
std::vector<std::vector<ToaDetection>> detect_toas_relative(const Frame& frame, double rel = 0.1);

/// Samplewise frame - background; acquisition metadata of `frame` kept.
/// Throws DataError on shape or sample-rate mismatch.
Frame background_subtract(const Frame& frame, const Frame& background);

/// Monostatic range c_s * t / 2.
double range_from_toa(double toa_seconds, double speed_of_sound);

/// Full round-trip path length c_s * t (bistatic pipeline convention).
double round_trip_from_toa(double toa_seconds, double speed_of_sound);

}  // namespace echoloc
