#pragma once

#include <stdexcept>

#include "arecon/math.hpp"
#include "arecon/pose.hpp"

namespace arecon {

// Pinhole intrinsics. Pixel (px,py) samples through its center (px+0.5, py+0.5).
struct CameraIntrinsics {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  double near = 0.1;
  double far = 10.0;

  static CameraIntrinsics fromFov(int width, int height, double hfovRad,
                                  double vfovRad, double near, double far) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = 0.5 * width / std::tan(0.5 * hfovRad);
    k.fy = 0.5 * height / std::tan(0.5 * vfovRad);
    k.cx = 0.5 * width;
    k.cy = 0.5 * height;
    k.near = near;
    k.far = far;
    return k;
  }

  bool valid() const {
    return width > 0 && height > 0 && fx > 0 && fy > 0 && near > 0 &&
           near < far && cx >= 0 && cx <= width && cy >= 0 && cy <= height;
  }

  // Unit ray direction in camera coordinates through pixel center.
  Vec3 rayDir(int px, int py) const {
    return Vec3((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0).normalized();
  }
  Vec3 rayDirAt(double u, double v) const {  // continuous pixel coords
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
  }

  // Projects a camera-space point; returns false when behind the camera.
  bool project(const Vec3& pCam, double& u, double& v) const {
    if (pCam.z() <= 0.0) return false;
    u = fx * pCam.x() / pCam.z() + cx;
    v = fy * pCam.y() / pCam.z() + cy;
    return true;
  }

  bool insideImage(double u, double v) const {
    return u >= 0.0 && u < width && v >= 0.0 && v < height;
  }
};

inline void requireValidIntrinsics(const CameraIntrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("invalid camera intrinsics");
}

}  // namespace arecon
