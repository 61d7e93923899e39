#include "kinegen/geometry.hpp"

#include <algorithm>

namespace kinegen {

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n < 1e-9) throw ZeroAxisError();
  return {x / n, y / n, z / n};
}

UnitQuat::UnitQuat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < 1e-12) throw Error("cannot normalize zero quaternion");
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  canonicalize();
}

void UnitQuat::canonicalize() {
  bool flip = w < 0.0;
  if (w == 0.0) {
    if (x != 0.0)
      flip = x < 0.0;
    else if (y != 0.0)
      flip = y < 0.0;
    else
      flip = z < 0.0;
  }
  if (flip) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
}

UnitQuat UnitQuat::operator*(const UnitQuat& o) const {
  return raw(w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
             w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w);
}

Vec3 UnitQuat::rotate(const Vec3& v) const {
  // v' = v + 2 q_v x (q_v x v + w v)
  const Vec3 qv{x, y, z};
  const Vec3 t = qv.cross(v) * 2.0;
  return v + t * w + qv.cross(t);
}

UnitQuat UnitQuat::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = axis.normalized();
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return raw(std::cos(h), u.x * s, u.y * s, u.z * s);
}

double UnitQuat::angle_between(const UnitQuat& a, const UnitQuat& b) {
  const double d =
      std::clamp(std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z), 0.0, 1.0);
  return 2.0 * std::acos(d);
}

Vec3 UnitQuat::to_rotation_vector() const {
  const double s = std::sqrt(x * x + y * y + z * z);
  if (s < 1e-12) return {0.0, 0.0, 0.0};
  const double angle = 2.0 * std::atan2(s, w);
  return Vec3{x, y, z} * (angle / s);
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

Pose inverse(const Pose& p) {
  const UnitQuat rinv = p.rotation.conjugate();
  return {rinv, rinv.rotate(-p.translation)};
}

Pose rotate_about_axis(const Vec3& axis, const Vec3& point_on_axis, double angle) {
  if (axis.norm() < 1e-9) throw ZeroAxisError();
  const UnitQuat r = UnitQuat::from_axis_angle(axis, angle);
  return {r, point_on_axis - r.rotate(point_on_axis)};
}

UnitQuat slerp(const UnitQuat& q0, const UnitQuat& q1, double t) {
  double d = q0.w * q1.w + q0.x * q1.x + q0.y * q1.y + q0.z * q1.z;
  double sign = 1.0;
  if (d < 0.0) {  // take the short arc
    d = -d;
    sign = -1.0;
  }
  d = std::min(d, 1.0);
  const double theta = std::acos(d);
  double c0, c1;
  if (theta < 1e-9) {
    c0 = 1.0 - t;
    c1 = t;
  } else {
    const double s = std::sin(theta);
    c0 = std::sin((1.0 - t) * theta) / s;
    c1 = std::sin(t * theta) / s;
  }
  c1 *= sign;
  return UnitQuat(q0.w * c0 + q1.w * c1, q0.x * c0 + q1.x * c1, q0.y * c0 + q1.y * c1,
                  q0.z * c0 + q1.z * c1);
}

Pose apply_increment(const Pose& p, const std::array<double, 6>& delta) {
  const Vec3 dt{delta[0], delta[1], delta[2]};
  const Vec3 omega{delta[3], delta[4], delta[5]};
  const double angle = omega.norm();
  UnitQuat dq = UnitQuat::identity();
  if (angle >= 1e-12) dq = UnitQuat::from_axis_angle(omega * (1.0 / angle), angle);
  return {dq * p.rotation, p.translation + dt};
}

}  // namespace kinegen
