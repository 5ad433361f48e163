#include "echoloc/geometry.hpp"

#include <cmath>
#include <string>

#include "echoloc/errors.hpp"

namespace echoloc {

void SensorLayout::validate() const {
  if (!emitter.finite()) throw DataError("sensor layout: emitter position not finite");
  if (receivers.size() < 3)
    throw DataError("sensor layout: need at least 3 receivers, got " +
                    std::to_string(receivers.size()));
  if (!(speed_of_sound > 0)) throw DataError("sensor layout: speed of sound must be positive");
  for (std::size_t i = 0; i < receivers.size(); ++i) {
    if (!receivers[i].finite()) throw DataError("sensor layout: receiver position not finite");
    for (std::size_t j = i + 1; j < receivers.size(); ++j) {
      if (distance(receivers[i], receivers[j]) == 0.0)
        throw DataError("sensor layout: receivers " + std::to_string(i) + " and " +
                        std::to_string(j) + " coincide");
    }
  }
  if (!(facing.norm() > 0)) throw DataError("sensor layout: facing vector must be nonzero");
}

Radii radii_from_round_trip(double s, double baseline) {
  if (!(baseline >= 0)) throw DataError("radii: baseline must be nonnegative");
  if (!(s > baseline))
    throw DataError("radii: round-trip distance " + std::to_string(s) +
                    " m does not exceed baseline " + std::to_string(baseline) +
                    " m (echo would precede the direct path)");
  const double minor = 0.5 * std::sqrt(s * s - baseline * baseline);
  return {minor, 0.5 * s, minor};
}

Ellipsoid ellipsoid_from_pair(const Vec3& u, const Vec3& v, double s) {
  const Vec3 base = v - u;
  const double b = base.norm();
  Ellipsoid e;
  e.center = (u + v) * 0.5;
  e.radii = radii_from_round_trip(s, b);
  if (b == 0.0) {
    e.rotation = Mat3::identity();
    return e;
  }
  // Minimal rotation taking local y onto the baseline direction. The spheroid
  // is symmetric about the baseline, so any such rotation is valid; this one
  // is deterministic.
  const Vec3 d = base / b;
  const Vec3 yhat{0, 1, 0};
  const Vec3 axis = yhat.cross(d);
  const double axis_norm = axis.norm();
  const double c = yhat.dot(d);
  if (axis_norm < 1e-15) {
    if (c > 0) {
      e.rotation = Mat3::identity();
    } else {
      // antiparallel: 180 degrees about x
      e.rotation = Mat3::from_axis_angle({1, 0, 0}, M_PI);
    }
    return e;
  }
  e.rotation = Mat3::from_axis_angle(axis / axis_norm, std::atan2(axis_norm, c));
  return e;
}

double quadric_eval(const Vec3& point, const Ellipsoid& e) {
  const Vec3 local = e.rotation.transpose_apply(point - e.center);
  const double x = local.x / e.radii.a;
  const double y = local.y / e.radii.b;
  const double z = local.z / e.radii.c;
  return x * x + y * y + z * z - 1.0;
}

Vec3 quadric_grad(const Vec3& point, const Ellipsoid& e) {
  const Vec3 local = e.rotation.transpose_apply(point - e.center);
  const Vec3 local_grad{2.0 * local.x / (e.radii.a * e.radii.a),
                        2.0 * local.y / (e.radii.b * e.radii.b),
                        2.0 * local.z / (e.radii.c * e.radii.c)};
  return e.rotation.apply(local_grad);
}

}  // namespace echoloc
