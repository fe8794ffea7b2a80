#pragma once

#include <stdexcept>

#include "arecon/math.hpp"

namespace arecon {

// Camera-to-world rigid transform: world = R * cam + t.
// Camera frame: +x right, +y down, +z forward (optical axis).
struct Pose {
  Mat3 R{Mat3::Identity()};
  Vec3 t{Vec3::Zero()};

  Vec3 camToWorld(const Vec3& p) const { return R * p + t; }
  Vec3 worldToCam(const Vec3& p) const { return R.transpose() * (p - t); }
  Vec3 dirToWorld(const Vec3& d) const { return R * d; }
  Vec3 forward() const { return R.col(2); }
  Vec3 position() const { return t; }

  bool isOrthonormal(double tol = 1e-9) const {
    return (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
  }
};

inline void requireValidPose(const Pose& pose) {
  if (!pose.isOrthonormal(1e-7) || !pose.t.allFinite())
    throw std::invalid_argument("pose rotation is not orthonormal");
}

// Build a pose whose optical axis points from `position` to `target`.
// `up` fixes the roll so that image-down maps to world-down.
inline Pose lookAt(const Vec3& position, const Vec3& target,
                   const Vec3& up = Vec3(0, 0, 1)) {
  Vec3 z = target - position;
  double n = z.norm();
  if (n < 1e-12) z = Vec3(1, 0, 0); else z /= n;
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3(0, 1, 0));  // axis parallel to up
  x.normalize();
  Vec3 y = z.cross(x).normalized();
  Pose p;
  p.R.col(0) = x;
  p.R.col(1) = y;
  p.R.col(2) = z;
  p.t = position;
  return p;
}

// Minimal angle between the optical axes of two poses, in radians.
inline double opticalAxisAngle(const Pose& a, const Pose& b) {
  double c = clampd(a.forward().dot(b.forward()), -1.0, 1.0);
  return std::acos(c);
}

// w,x,y,z quaternion from the rotation, deterministic branch selection.
inline Eigen::Vector4d rotationToQuaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  if (q.w() < 0) q.coeffs() *= -1.0;
  return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

}  // namespace arecon
