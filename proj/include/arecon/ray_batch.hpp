#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "arecon/frame.hpp"
#include "arecon/math.hpp"

namespace arecon {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();     // unit length
  Vec3 gtColor = Vec3::Zero();
  double gtDepth = 0.0;
  bool depthValid = false;
  double weight = 1.0;          // ω_i
  std::vector<double> z;        // strictly increasing, within (near, far)
};

struct RayBatch {
  std::vector<Ray> rays;
  double near = 0.1;
  double far = 10.0;

  void validate() const {
    if (rays.empty()) throw std::invalid_argument("empty ray batch");
    for (const auto& r : rays) {
      if (std::abs(r.dir.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("ray direction not unit length");
      if (r.z.empty()) throw std::invalid_argument("ray has no samples");
      double prev = near;
      for (double zi : r.z) {
        if (!(zi > prev) || !(zi < far))
          throw std::invalid_argument("sample depths must increase within (near, far)");
        prev = zi;
      }
    }
  }
};

// Random pixel batch from a frame. Valid-depth rays split their samples half
// stratified across free space up to just past the hit, half concentrated in
// the truncation band; invalid rays sample the full range.
inline RayBatch buildRayBatch(const Frame& frame, int rayCount, int samplesPerRay,
                              double truncation, double invalidRayWeight, Rng& rng) {
  if (rayCount <= 0 || samplesPerRay < 2)
    throw std::invalid_argument("bad ray batch shape");
  RayBatch batch;
  batch.near = frame.intrinsics.near;
  batch.far = frame.intrinsics.far;
  batch.rays.reserve(rayCount);
  const double eps = 1e-6;

  for (int n = 0; n < rayCount; ++n) {
    int px = static_cast<int>(rng.uniformInt(0, frame.image.width - 1));
    int py = static_cast<int>(rng.uniformInt(0, frame.image.height - 1));
    Ray r;
    r.origin = frame.pose.position();
    r.dir = frame.pose.dirToWorld(frame.intrinsics.rayDir(px, py));
    r.gtColor = pixelRgb(frame.image, px, py);
    r.depthValid = frame.valid.at(px, py) != 0;
    r.gtDepth = r.depthValid ? frame.depth.at(px, py) : 0.0;
    r.weight = r.depthValid ? 1.0 : invalidRayWeight;

    auto stratified = [&](double lo, double hi, int count) {
      lo = std::max(lo, batch.near + eps);
      hi = std::min(hi, batch.far - eps);
      if (!(hi > lo) || count <= 0) return;
      double step = (hi - lo) / count;
      for (int i = 0; i < count; ++i)
        r.z.push_back(lo + (i + rng.uniform(0.0, 1.0)) * step);
    };
    if (r.depthValid) {
      int half = samplesPerRay / 2;
      stratified(batch.near, r.gtDepth + 2.0 * truncation, samplesPerRay - half);
      stratified(r.gtDepth - truncation, r.gtDepth + truncation, half);
    } else {
      stratified(batch.near, batch.far, samplesPerRay);
    }
    std::sort(r.z.begin(), r.z.end());
    for (size_t i = 1; i < r.z.size(); ++i)
      r.z[i] = std::max(r.z[i], r.z[i - 1] + 1e-9);
    while (!r.z.empty() && r.z.back() >= batch.far) r.z.pop_back();
    if (r.z.empty()) r.z.push_back(0.5 * (batch.near + batch.far));
    batch.rays.push_back(std::move(r));
  }
  return batch;
}

}  // namespace arecon
