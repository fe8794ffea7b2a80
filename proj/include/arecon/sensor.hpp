#pragma once

#include <stdexcept>

#include "arecon/frame.hpp"
#include "arecon/scene.hpp"

namespace arecon {

struct SphereTraceResult {
  bool hit = false;
  double t = 0.0;
  int steps = 0;
};

struct SphereTraceParams {
  int maxSteps = 256;
  double epsScale = 1e-4;  // hit epsilon = epsScale * scene scale
  double relaxation = 1.0;
};

inline SphereTraceResult sphereTrace(const SceneSpec& scene, const Vec3& origin,
                                     const Vec3& dir, double tNear, double tFar,
                                     const SphereTraceParams& params = {}) {
  const double eps = params.epsScale * scene.sceneScale();
  SphereTraceResult r;
  double t = tNear;
  for (int s = 0; s < params.maxSteps && t < tFar; ++s) {
    double d = gtSdf(scene, origin + t * dir);
    r.steps = s + 1;
    if (d < eps) {
      r.hit = true;
      r.t = t;
      return r;
    }
    t += params.relaxation * d;
  }
  return r;
}

// Pinhole RGB-D render: sphere tracing against the analytic SDF, Lambertian
// headlight shading, optional Gaussian depth noise clamped to (near, far).
// Misses carry the invalid-depth sentinel 0 and background color.
inline Frame renderRgbd(const SceneSpec& scene, const Pose& pose,
                        const CameraIntrinsics& intr, double noiseSigma = 0.0,
                        int frameId = 0, std::uint64_t noiseSeed = 0) {
  requireValidPose(pose);
  requireValidIntrinsics(intr);
  if (noiseSigma < 0) throw std::invalid_argument("noise sigma must be >= 0");

  Frame f;
  f.image = ImageRgb(intr.width, intr.height, 3);
  f.depth = Image<double>(intr.width, intr.height, 1);
  f.valid = ImageMask(intr.width, intr.height, 1, 0);
  f.pose = pose;
  f.intrinsics = intr;
  f.id = frameId;

  for (int py = 0; py < intr.height; ++py) {
    for (int px = 0; px < intr.width; ++px) {
      Vec3 dir = pose.dirToWorld(intr.rayDir(px, py));
      SphereTraceResult tr = sphereTrace(scene, pose.position(), dir, intr.near, intr.far);
      if (!tr.hit) {
        setPixelRgb(f.image, px, py, scene.background);
        f.depth.at(px, py) = 0.0;
        continue;
      }
      Vec3 hit = pose.position() + tr.t * dir;
      Vec3 n = gtSdfGrad(scene, hit).normalized();
      double lambert = std::max(0.0, -n.dot(dir));  // headlight at the camera
      Vec3 color = scene.albedo.eval(hit) * lambert;
      setPixelRgb(f.image, px, py, color.cwiseMin(1.0).cwiseMax(0.0));

      double depth = tr.t;
      if (noiseSigma > 0.0) {
        Rng rng(hashCombine(hashCombine(noiseSeed, static_cast<std::uint64_t>(frameId)),
                            static_cast<std::uint64_t>(py) * 73856093ULL + px));
        depth = clampd(depth + rng.normal(0.0, noiseSigma), intr.near + 1e-9,
                       intr.far - 1e-9);
      }
      f.depth.at(px, py) = depth;
      f.valid.at(px, py) = 1;
    }
  }
  return f;
}

// Rejection sampling + Newton projection along the SDF gradient. Points land
// on the zero level set with |sdf| < 1e-4 and stay inside bounds.
// Deterministic for a fixed seed. Throws when no surface exists in bounds.
inline std::vector<Vec3> sampleGtSurface(const SceneSpec& scene, int n,
                                         std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("sample count must be > 0");
  Rng rng(hashMix(seed ^ 0x5f3759df9e3779b9ULL));
  std::vector<Vec3> pts;
  pts.reserve(n);
  // Thin band keeps the projected density close to area-uniform; a wide one
  // funnels whole cylinders of volume onto edges.
  const double band = 0.02 * scene.sceneScale();
  const double tol = 1e-4;
  long attempts = 0;
  const long maxAttempts = 20000L + 4000L * static_cast<long>(n);
  while (static_cast<int>(pts.size()) < n) {
    if (++attempts > maxAttempts)
      throw std::runtime_error("no reachable surface inside scene bounds");
    Vec3 p = rng.uniformInBox(scene.bounds);
    double s = gtSdf(scene, p);
    if (std::abs(s) > band) continue;
    bool ok = false;
    for (int it = 0; it < 30; ++it) {
      Vec3 g = gtSdfGrad(scene, p);
      double g2 = g.squaredNorm();
      if (g2 < 1e-12) break;
      p -= s * g / g2;
      s = gtSdf(scene, p);
      if (std::abs(s) < tol) {
        ok = true;
        break;
      }
    }
    if (ok && scene.bounds.contains(p) && std::abs(gtSdf(scene, p)) < tol)
      pts.push_back(p);
  }
  return pts;
}

}  // namespace arecon
