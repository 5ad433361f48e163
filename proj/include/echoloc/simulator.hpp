#pragma once

#include <cstdint>
#include <vector>

#include "echoloc/geometry.hpp"
#include "echoloc/memg.hpp"
#include "echoloc/signal.hpp"

namespace echoloc {

struct ClutterComponent {
  int channel = 0;
  EmgParams params;
};

/// Synthetic acquisition description. Channels carry each EMG component on a
/// delay-locked carrier so that the Hilbert envelope of the synthesized
/// waveform reproduces the component sum.
struct Scene {
  SensorLayout layout;
  std::vector<Vec3> targets;
  std::vector<double> reflectivity;  // per target, in (0, 1]
  std::vector<ClutterComponent> clutter;
  double noise_std = 0;
  std::uint64_t rng_seed = 0;
  double sample_rate = 22000.0;
  int n_samples = 64;
  double carrier_cycles_per_sample = 0.2;

  void validate() const;  // throws DataError
};

/// Emitter at the origin, 3 receivers on an equilateral triangle of radius
/// 75 mm in the z = 0 plane (first vertex on +x), c_s = 343 m/s, facing +z.
/// The fourth receiver is collocated with the emitter: the hardware has four
/// MEMS receivers but only three triangle positions are documented, so the
/// monostatic center position is used as the default hypothesis.
SensorLayout default_layout();

/// Round-trip time (|u-s| + |s-v|) / c_s.
double forward_toa(const Vec3& u, const Vec3& v, const Vec3& s, double speed_of_sound);

struct SynthesizedFrame {
  Frame frame;
  // Per target, per channel: exact arrival in sample units.
  std::vector<std::vector<double>> gt_toa_samples;
};

/// Deterministic frame synthesis: per channel, each target contributes an
/// EMG(alpha = reflectivity / round_trip^2, mu = toa * fs, sigma = 2,
/// eta = 1) component; clutter components and white Gaussian noise are
/// added. Throws DataError when a target ToA falls outside the window.
SynthesizedFrame synthesize_frame(const Scene& scene);

/// Per channel, the echo whose ToA (sample units) is nearest to the
/// projected GT arrival gets label 1, gated at |delta| <= gate samples; all
/// other labels 0.
std::vector<std::vector<int>> label_from_gt(const Vec3& gt,
                                            const std::vector<std::vector<double>>& toa_samples,
                                            const SensorLayout& layout, double sample_rate,
                                            double gate_samples = 2.0);

/// The 3 x 3 x 2 evaluation lattice: x, y in {-80, 0, 80} mm, z in
/// {100, 180} mm.
std::vector<Vec3> default_grid();

struct DatasetSpec {
  std::vector<Vec3> grid;         // target positions, cycled
  int repetitions = 1;            // frames per grid position
  int total_frames = 0;           // when > 0 overrides grid x repetitions
  double noise_std = 0;
  int clutter_per_channel = 0;
  bool ambiguous_clutter = false;  // place one clutter echo near the target ToA
  double position_jitter = 0;      // uniform +- jitter per axis, meters
  double reflectivity = 1.0;
  std::uint64_t seed = 0;
  SensorLayout layout;  // default constructed -> default_layout()
};

/// Deterministic labeled dataset; every frame carries its GT position.
std::vector<Frame> generate_dataset(const DatasetSpec& spec);

}  // namespace echoloc
