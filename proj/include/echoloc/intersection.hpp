#pragma once

#include <optional>
#include <span>
#include <vector>

#include "echoloc/geometry.hpp"

namespace echoloc {

struct SolverConfig {
  double step_size = 0.5;             // gamma in (0, 1]
  int max_iterations = 100;
  double residual_tolerance = 1e-9;   // on sum_n |Q_n|
  std::optional<Vec3> init_point;     // nullopt -> auto_init
  Vec3 facing{0, 0, 1};               // used by auto_init
};

struct SolveResult {
  Vec3 position;
  double residual_sum = 0;                     // sum_n |Q_n| at the returned point
  int iterations_used = 0;
  std::vector<double> per_iteration_residuals; // includes the initial point
  bool converged = false;
};

/// Component n is quadric_eval(point, ellipsoids[n]).
std::vector<double> residual_vector(const Vec3& point, std::span<const Ellipsoid> ellipsoids);

/// N x 3 row-major Jacobian; row n is quadric_grad(point, ellipsoids[n]).
std::vector<double> jacobian(const Vec3& point, std::span<const Ellipsoid> ellipsoids);

/// Common-focus estimate displaced along `facing` by the mean major radius:
/// a deterministic start in front of the array.
Vec3 auto_init(std::span<const Ellipsoid> ellipsoids, const Vec3& facing = {0, 0, 1});

/// Damped Gauss-Newton root finding on the stacked quadric functions using
/// the Moore-Penrose pseudo-inverse (normal equations, Tikhonov 1e-12).
/// Returns the least-residual iterate; converged means sum_n |Q_n| <= tol.
/// Throws DataError for N < 3, NumericError on divergence or a degenerate
/// (rank-deficient, non-progressing) configuration.
SolveResult solve(std::span<const Ellipsoid> ellipsoids, const SolverConfig& cfg = {});

}  // namespace echoloc
