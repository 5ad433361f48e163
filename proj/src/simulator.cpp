#include "echoloc/simulator.hpp"

#include <cmath>
#include <string>

#include "echoloc/errors.hpp"
#include "echoloc/rng.hpp"

namespace echoloc {

void Scene::validate() const {
  layout.validate();
  if (targets.size() != reflectivity.size())
    throw DataError("scene: targets and reflectivity lists differ in length");
  for (double r : reflectivity)
    if (!(r > 0 && r <= 1)) throw DataError("scene: reflectivity must lie in (0, 1]");
  const Vec3 n = layout.facing.normalized();
  for (const Vec3& t : targets)
    if (!((t - layout.emitter).dot(n) > 0))
      throw DataError("scene: target behind the sensor plane");
  for (const ClutterComponent& c : clutter)
    if (c.channel < 0 || c.channel >= static_cast<int>(layout.receivers.size()))
      throw DataError("scene: clutter channel out of range");
  if (!(noise_std >= 0)) throw DataError("scene: noise_std must be nonnegative");
  if (n_samples < 4) throw DataError("scene: need at least 4 samples");
  if (!(sample_rate > 0)) throw DataError("scene: sample rate must be positive");
}

SensorLayout default_layout() {
  SensorLayout layout;
  layout.emitter = {0, 0, 0};
  const double radius = 0.075;
  for (int k = 0; k < 3; ++k) {
    const double angle = 2.0 * M_PI * k / 3.0;
    layout.receivers.push_back({radius * std::cos(angle), radius * std::sin(angle), 0.0});
  }
  layout.receivers.push_back({0, 0, 0});  // monostatic channel at the emitter
  layout.speed_of_sound = 343.0;
  layout.facing = {0, 0, 1};
  return layout;
}

double forward_toa(const Vec3& u, const Vec3& v, const Vec3& s, double speed_of_sound) {
  if (!(speed_of_sound > 0)) throw DataError("forward_toa: speed of sound must be positive");
  return (distance(u, s) + distance(s, v)) / speed_of_sound;
}

SynthesizedFrame synthesize_frame(const Scene& scene) {
  scene.validate();
  const int n_channels = static_cast<int>(scene.layout.receivers.size());
  const int t_count = scene.n_samples;
  const double fc = scene.carrier_cycles_per_sample;

  SynthesizedFrame out;
  out.frame.sample_rate = scene.sample_rate;
  out.frame.channels.assign(n_channels, std::vector<double>(t_count, 0.0));
  if (!scene.targets.empty()) out.frame.gt_position = scene.targets.front();
  out.gt_toa_samples.assign(scene.targets.size(), std::vector<double>(n_channels, 0.0));

  // Each component rides a carrier locked to its own delay, so the Hilbert
  // envelope of the channel reproduces the component sum.
  auto add_component = [&](std::vector<double>& ch, const EmgParams& p) {
    for (int i = 0; i < t_count; ++i)
      ch[i] += emg_eval(p, i) * std::cos(2.0 * M_PI * fc * (i - p.mean));
  };

  for (std::size_t ti = 0; ti < scene.targets.size(); ++ti) {
    for (int n = 0; n < n_channels; ++n) {
      const double toa = forward_toa(scene.layout.emitter, scene.layout.receivers[n],
                                     scene.targets[ti], scene.layout.speed_of_sound);
      const double mu = toa * scene.sample_rate;
      out.gt_toa_samples[ti][n] = mu;
      if (mu >= t_count - 4 || mu < 0)
        throw DataError("synthesize_frame: target " + std::to_string(ti) +
                        " arrives at sample " + std::to_string(mu) +
                        ", outside the " + std::to_string(t_count) + "-sample window");
      const double rt = toa * scene.layout.speed_of_sound;
      add_component(out.frame.channels[n],
                    {scene.reflectivity[ti] / (rt * rt), mu, 2.0, 1.0});
    }
  }
  for (const ClutterComponent& c : scene.clutter)
    add_component(out.frame.channels[c.channel], c.params);

  if (scene.noise_std > 0) {
    Rng rng(scene.rng_seed);
    for (int n = 0; n < n_channels; ++n)
      for (int i = 0; i < t_count; ++i)
        out.frame.channels[n][i] += scene.noise_std * rng.normal();
  }
  return out;
}

std::vector<std::vector<int>> label_from_gt(const Vec3& gt,
                                            const std::vector<std::vector<double>>& toa_samples,
                                            const SensorLayout& layout, double sample_rate,
                                            double gate_samples) {
  if (!gt.finite()) throw DataError("label_from_gt: GT position not finite");
  std::vector<std::vector<int>> labels(toa_samples.size());
  for (std::size_t n = 0; n < toa_samples.size(); ++n) {
    labels[n].assign(toa_samples[n].size(), 0);
    if (toa_samples[n].empty() || n >= layout.receivers.size()) continue;
    const double mu_gt =
        forward_toa(layout.emitter, layout.receivers[n], gt, layout.speed_of_sound) * sample_rate;
    std::size_t best = 0;
    double best_delta = std::abs(toa_samples[n][0] - mu_gt);
    for (std::size_t k = 1; k < toa_samples[n].size(); ++k) {
      const double delta = std::abs(toa_samples[n][k] - mu_gt);
      if (delta < best_delta) {
        best_delta = delta;
        best = k;
      }
    }
    if (best_delta <= gate_samples) labels[n][best] = 1;
  }
  return labels;
}

std::vector<Vec3> default_grid() {
  std::vector<Vec3> grid;
  for (double x : {-0.08, 0.0, 0.08})
    for (double y : {-0.08, 0.0, 0.08})
      for (double z : {0.10, 0.18}) grid.push_back({x, y, z});
  return grid;
}

std::vector<Frame> generate_dataset(const DatasetSpec& spec) {
  if (spec.grid.empty()) throw DataError("generate_dataset: empty position grid");
  SensorLayout layout = spec.layout;
  if (layout.receivers.empty()) layout = default_layout();
  layout.validate();

  const int total = spec.total_frames > 0
                        ? spec.total_frames
                        : static_cast<int>(spec.grid.size()) * std::max(spec.repetitions, 1);
  std::vector<Frame> frames;
  frames.reserve(total);
  Rng root(spec.seed);

  for (int f = 0; f < total; ++f) {
    Rng rng = root.fork(static_cast<std::uint64_t>(f));
    Scene scene;
    scene.layout = layout;
    scene.noise_std = spec.noise_std;
    scene.rng_seed = rng.next_u64();

    Vec3 target = spec.grid[f % spec.grid.size()];
    if (spec.position_jitter > 0) {
      target.x += rng.uniform(-spec.position_jitter, spec.position_jitter);
      target.y += rng.uniform(-spec.position_jitter, spec.position_jitter);
      target.z += rng.uniform(-spec.position_jitter, spec.position_jitter);
    }
    scene.targets = {target};
    scene.reflectivity = {spec.reflectivity};

    if (spec.clutter_per_channel > 0) {
      const int n_channels = static_cast<int>(layout.receivers.size());
      for (int n = 0; n < n_channels; ++n) {
        const double mu_t = forward_toa(layout.emitter, layout.receivers[n], target,
                                        layout.speed_of_sound) * scene.sample_rate;
        const double rt = distance(layout.emitter, target) + distance(target, layout.receivers[n]);
        const double target_alpha = spec.reflectivity / (rt * rt);
        std::vector<double> mus{mu_t};
        for (int c = 0; c < spec.clutter_per_channel; ++c) {
          double mu_c = 0;
          // Clutter must stay detection-separable (distinct rising edges) yet
          // land inside the cross-channel spread of target arrivals so that
          // plain ToA matching is ambiguous.
          for (int attempt = 0; attempt < 64; ++attempt) {
            if (c == 0 && spec.ambiguous_clutter) {
              const double off = rng.uniform(7.0, 11.0);
              mu_c = mu_t + (rng.uniform() < 0.5 ? -off : off);
            } else {
              mu_c = rng.uniform(8.0, scene.n_samples - 10.0);
            }
            bool ok = mu_c > 7.0 && mu_c < scene.n_samples - 8.0;
            for (double m : mus) ok = ok && std::abs(m - mu_c) >= 6.0;
            if (ok) break;
          }
          mus.push_back(mu_c);
          EmgParams p;
          p.amplitude = target_alpha * rng.uniform(0.4, 2.2);
          p.mean = mu_c;
          p.spread = rng.uniform(1.3, 2.8);
          p.asymmetry = rng.uniform(-1.5, 2.5);
          scene.clutter.push_back({n, p});
        }
      }
    }
    frames.push_back(synthesize_frame(scene).frame);
  }
  return frames;
}

}  // namespace echoloc
