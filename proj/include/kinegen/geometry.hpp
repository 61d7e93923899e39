#pragma once

#include <array>
#include <cmath>

#include "kinegen/errors.hpp"

namespace kinegen {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double squared_norm() const { return dot(*this); }

  // Throws ZeroAxisError below 1e-9.
  Vec3 normalized() const;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Unit quaternion with the double cover resolved by keeping w >= 0
// (lexicographic tie-break at w == 0) so serialization is unique.
struct UnitQuat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  UnitQuat() = default;
  UnitQuat(double w_, double x_, double y_, double z_);

  UnitQuat operator*(const UnitQuat& o) const;
  UnitQuat conjugate() const { return raw(w, -x, -y, -z); }

  Vec3 rotate(const Vec3& v) const;

  static UnitQuat identity() { return {}; }
  static UnitQuat from_axis_angle(const Vec3& axis, double angle);
  // Rotation angle in [0, pi] between two orientations.
  static double angle_between(const UnitQuat& a, const UnitQuat& b);

  // Rotation vector (axis * angle) such that from_axis_angle of it is *this.
  Vec3 to_rotation_vector() const;

private:
  // Bypasses normalization; components must already form a unit quaternion.
  static UnitQuat raw(double w, double x, double y, double z) {
    UnitQuat q;
    q.w = w;
    q.x = x;
    q.y = y;
    q.z = z;
    q.canonicalize();
    return q;
  }
  void canonicalize();
  friend UnitQuat slerp(const UnitQuat&, const UnitQuat&, double);
};

// Rigid transform; action on a point is rotate-then-translate.
struct Pose {
  UnitQuat rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation.rotate(d); }

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {UnitQuat::identity(), t}; }

  std::array<double, 7> to_array() const {
    return {translation.x, translation.y, translation.z, rotation.w, rotation.x, rotation.y,
            rotation.z};
  }
  static Pose from_array(const std::array<double, 7>& a) {
    return {UnitQuat(a[3], a[4], a[5], a[6]), Vec3(a[0], a[1], a[2])};
  }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
inline Vec3 transform_point(const Pose& p, const Vec3& v) { return p.apply(v); }

// Pose that fixes every point of the line (point_on_axis, axis) and rotates
// everything else by `angle`. Throws ZeroAxisError if |axis| < 1e-9.
Pose rotate_about_axis(const Vec3& axis, const Vec3& point_on_axis, double angle);

UnitQuat slerp(const UnitQuat& q0, const UnitQuat& q1, double t);

// Left-multiplicative local increment used by the pose solver: rotation
// delta (axis-angle, applied about the pose origin) plus translation delta.
Pose apply_increment(const Pose& p, const std::array<double, 6>& delta);

inline bool approx_equal(const Vec3& a, const Vec3& b, double tol = 1e-9) {
  return (a - b).norm() <= tol;
}
inline bool approx_equal(const Pose& a, const Pose& b, double tol = 1e-9) {
  return approx_equal(a.translation, b.translation, tol) &&
         UnitQuat::angle_between(a.rotation, b.rotation) <= tol;
}

}  // namespace kinegen
