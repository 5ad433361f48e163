#pragma once

#include <vector>

#include "echoloc/vec3.hpp"

namespace echoloc {

/// One emitter and N >= 3 receivers, plus the radiation direction of the
/// array (the half-space the emitter insonifies).
struct SensorLayout {
  Vec3 emitter;
  std::vector<Vec3> receivers;
  double speed_of_sound = 343.0;  // m/s
  Vec3 facing{0, 0, 1};

  /// Throws DataError on violated invariants (N >= 3, distinct receivers,
  /// positive speed of sound, finite positions).
  void validate() const;
};

struct Radii {
  double a = 0, b = 0, c = 0;  // meters; b is the major (focal) axis
};

/// Spheroid with foci at the emitter and one receiver. The local frame maps
/// y to the major axis; r_a == r_c so any rotation about the baseline is
/// equivalent.
struct Ellipsoid {
  Vec3 center;
  Mat3 rotation;  // local -> world
  Radii radii;
};

/// Radii from a round-trip distance s and focal baseline b (both meters).
/// Throws DataError when s <= b (echo cannot arrive before the direct path).
Radii radii_from_round_trip(double round_trip_distance, double baseline);

/// Ellipsoid through all points p with |p-u| + |p-v| = round_trip_distance.
/// u == v degenerates to a sphere with identity rotation.
Ellipsoid ellipsoid_from_pair(const Vec3& u, const Vec3& v, double round_trip_distance);

/// Quadric surface function: zero iff the point lies on the surface,
/// -1 at the center.
double quadric_eval(const Vec3& point, const Ellipsoid& e);

/// Analytic gradient of quadric_eval with respect to the world-frame point.
Vec3 quadric_grad(const Vec3& point, const Ellipsoid& e);

}  // namespace echoloc
