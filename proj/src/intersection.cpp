#include "echoloc/intersection.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "echoloc/errors.hpp"

namespace echoloc {
namespace {

double abs_residual_sum(const Vec3& p, std::span<const Ellipsoid> ells) {
  double s = 0;
  for (const Ellipsoid& e : ells) s += std::abs(quadric_eval(p, e));
  return s;
}

/// Focal half-distance along the major axis.
double focal_half_distance(const Ellipsoid& e) {
  const double d2 = e.radii.b * e.radii.b - e.radii.a * e.radii.a;
  return d2 > 0 ? std::sqrt(d2) : 0.0;
}

}  // namespace

std::vector<double> residual_vector(const Vec3& point, std::span<const Ellipsoid> ellipsoids) {
  std::vector<double> f(ellipsoids.size());
  for (std::size_t n = 0; n < ellipsoids.size(); ++n) f[n] = quadric_eval(point, ellipsoids[n]);
  return f;
}

std::vector<double> jacobian(const Vec3& point, std::span<const Ellipsoid> ellipsoids) {
  std::vector<double> j(ellipsoids.size() * 3);
  for (std::size_t n = 0; n < ellipsoids.size(); ++n) {
    const Vec3 g = quadric_grad(point, ellipsoids[n]);
    j[n * 3 + 0] = g.x;
    j[n * 3 + 1] = g.y;
    j[n * 3 + 2] = g.z;
  }
  return j;
}

Vec3 auto_init(std::span<const Ellipsoid> ellipsoids, const Vec3& facing) {
  if (ellipsoids.empty()) throw DataError("auto_init: no ellipsoids");
  // The emitter is a focus shared by every ellipsoid (spheres degenerate to
  // their centers). Try both foci of the first body and keep the candidate
  // closest to a focus of each of the others.
  const Ellipsoid& first = ellipsoids[0];
  const Vec3 major = first.rotation.apply({0, 1, 0});
  const double f0 = focal_half_distance(first);
  const Vec3 candidates[2] = {first.center - major * f0, first.center + major * f0};
  double best_cost = std::numeric_limits<double>::infinity();
  Vec3 emitter = candidates[0];
  for (const Vec3& cand : candidates) {
    double cost = 0;
    for (const Ellipsoid& e : ellipsoids) {
      const Vec3 axis = e.rotation.apply({0, 1, 0});
      const double f = focal_half_distance(e);
      cost += std::min(distance(cand, e.center - axis * f), distance(cand, e.center + axis * f));
    }
    if (cost < best_cost) {
      best_cost = cost;
      emitter = cand;
    }
  }
  double mean_major = 0;
  for (const Ellipsoid& e : ellipsoids) mean_major += e.radii.b;
  mean_major /= static_cast<double>(ellipsoids.size());
  return emitter + facing.normalized() * mean_major;
}

SolveResult solve(std::span<const Ellipsoid> ellipsoids, const SolverConfig& cfg) {
  if (ellipsoids.size() < 3)
    throw DataError("solve: need at least 3 ellipsoids, got " +
                    std::to_string(ellipsoids.size()));
  if (cfg.max_iterations < 1) throw DataError("solve: max_iterations must be >= 1");
  if (!(cfg.residual_tolerance > 0)) throw DataError("solve: residual_tolerance must be > 0");

  SolveResult result;
  Vec3 x = cfg.init_point ? *cfg.init_point : auto_init(ellipsoids, cfg.facing);

  double best_res = std::numeric_limits<double>::infinity();
  Vec3 best_x = x;
  int stalled = 0;

  for (int j = 0; j <= cfg.max_iterations; ++j) {
    if (!x.finite()) throw NumericError("solve: iterate diverged to non-finite values");
    const double res = abs_residual_sum(x, ellipsoids);
    result.per_iteration_residuals.push_back(res);
    if (res < best_res) {
      best_res = res;
      best_x = x;
      result.iterations_used = j;
      stalled = 0;
    } else {
      ++stalled;
    }
    if (best_res <= cfg.residual_tolerance || j == cfg.max_iterations) break;

    // Gauss-Newton step through the damped normal equations (Moore-Penrose
    // pseudo-inverse of the N x 3 Jacobian).
    Mat3 jtj;
    jtj.m.fill(0);
    Vec3 jtf{0, 0, 0};
    for (const Ellipsoid& e : ellipsoids) {
      const Vec3 g = quadric_grad(x, e);
      const double q = quadric_eval(x, e);
      jtj(0, 0) += g.x * g.x;
      jtj(0, 1) += g.x * g.y;
      jtj(0, 2) += g.x * g.z;
      jtj(1, 1) += g.y * g.y;
      jtj(1, 2) += g.y * g.z;
      jtj(2, 2) += g.z * g.z;
      jtf += g * q;
    }
    jtj(1, 0) = jtj(0, 1);
    jtj(2, 0) = jtj(0, 2);
    jtj(2, 1) = jtj(1, 2);
    const double trace = jtj(0, 0) + jtj(1, 1) + jtj(2, 2);
    // A rank-deficient Jacobian shows as det collapsing relative to trace^3,
    // measured before damping so the regularizer cannot mask it.
    const bool rank_ok =
        trace > 0 && jtj.det() > 1e-18 * std::max(trace * trace * trace / 27.0, 1e-300);
    const double damping = 1e-12 * std::max(trace, 1.0);
    jtj(0, 0) += damping;
    jtj(1, 1) += damping;
    jtj(2, 2) += damping;
    if (!rank_ok) {
      if (stalled >= 3)
        throw NumericError(
            "solve: degenerate configuration (rank-deficient Jacobian with no residual "
            "progress; sensors may be collinear)");
      // fall back to a plain gradient step; jtf is the gradient of the
      // squared-residual objective
      x -= jtf * (cfg.step_size / std::max(trace, 1.0));
      continue;
    }
    const Vec3 step = solve3_spd(jtj, jtf);
    x -= step * cfg.step_size;
  }

  result.position = best_x;
  result.residual_sum = best_res;
  result.converged = best_res <= cfg.residual_tolerance;
  return result;
}

}  // namespace echoloc
