#pragma once

// Uncertainty-driven keyframe promotion and the viewpoint-space sliding
// window. Frames become keyframes when they diverge enough from the stored
// set, promise enough gain, and cover enough of the high-uncertainty voxels;
// the window picks spatially covisible keyframes regardless of capture order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arecon/frame.hpp"
#include "arecon/planning.hpp"

namespace arecon {

struct KeyframeParams {
  double tauView = 0.25;  // minimum divergence against every stored keyframe
  double tauInfo = 1.0;   // minimum frustum reward
  double tauRho = 0.1;    // minimum uncertainty coverage ratio
  double tauH = 0.05;     // dual-uncertainty threshold defining V_high
  int windowSize = 8;
  double thetaMix = 0.5;  // angular vs frustum-overlap mix in the divergence
  int iouRays = 128;

  void validate() const {
    if (tauView <= 0 || tauInfo <= 0 || tauRho <= 0 || tauH <= 0)
      throw std::invalid_argument("keyframe thresholds must be positive");
    if (windowSize < 1) throw std::invalid_argument("windowSize < 1");
    if (thetaMix < 0 || thetaMix > 1)
      throw std::invalid_argument("thetaMix outside [0,1]");
    if (iouRays < 1) throw std::invalid_argument("iouRays < 1");
  }
};

struct Keyframe {
  int frameId = -1;
  Pose pose;
  std::vector<std::int64_t> footprint;  // cached visibility voxel ids
  double delta = 0.0;                   // promotion diagnostics
  double gain = 0.0;
  double rho = 0.0;
};

struct KeyframeStore {
  std::vector<Keyframe> items;

  bool empty() const { return items.empty(); }
  size_t size() const { return items.size(); }

  // recompute cached footprints, e.g. after the volume geometry changed
  void refreshFootprints(const UncertaintyVolume& vol,
                         const CameraIntrinsics& intr,
                         const PlannerParams& p) {
    for (Keyframe& kf : items)
      kf.footprint = visibleVoxels(kf.pose, vol, intr, p);
  }
};

namespace detail {

inline bool insideFrustum(const Pose& pose, const CameraIntrinsics& intr,
                          const Vec3& point) {
  Vec3 pc = pose.worldToCam(point);
  if (pc.z() < intr.near || pc.z() > intr.far) return false;
  double u, v;
  if (!intr.project(pc, u, v)) return false;
  return u >= 0.0 && u <= intr.width && v >= 0.0 && v <= intr.height;
}

// fraction of points sampled inside `from` that also land inside `to`;
// the sample pattern is fixed so swapping the poses swaps the two terms
inline double frustumContainment(const Pose& from, const Pose& to,
                                 const CameraIntrinsics& intr, int rays) {
  Rng rng(0x0f00dULL);
  int inside = 0;
  for (int r = 0; r < rays; ++r) {
    double u = rng.uniform(0.0, intr.width);
    double v = rng.uniform(0.0, intr.height);
    double t = rng.uniform(intr.near, intr.far);  // z-depth, not range
    Vec3 dir = intr.rayDirAt(u, v);
    Vec3 p = from.camToWorld((t / dir.z()) * dir);
    if (insideFrustum(to, intr, p)) ++inside;
  }
  return static_cast<double>(inside) / rays;
}

}  // namespace detail

// δ = θ·(optical-axis angle) + (1−θ)·(1 − frustum IoU); the IoU comes from
// sampled containment both ways, so the result is exactly symmetric.
inline double viewpointDivergence(const Pose& a, const Pose& b,
                                  const CameraIntrinsics& intr,
                                  const KeyframeParams& kp) {
  requireValidPose(a);
  requireValidPose(b);
  double angle = opticalAxisAngle(a, b);
  double pAB = detail::frustumContainment(a, b, intr, kp.iouRays);
  double pBA = detail::frustumContainment(b, a, intr, kp.iouRays);
  double p = 0.5 * (pAB + pBA);
  double iou = p / (2.0 - p);  // frusta share the same volume measure
  return kp.thetaMix * angle + (1.0 - kp.thetaMix) * (1.0 - iou);
}

// {v : u_exp(v) > τ_h and u_imp(v) > τ_h}, sorted
inline std::vector<std::int64_t> highUncertaintySet(const UncertaintyVolume& vol,
                                                    double tauH) {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < vol.count(); ++i) {
    size_t s = static_cast<size_t>(i);
    if (vol.uExp[s] > tauH && vol.uImp[s] > tauH) out.push_back(i);
  }
  return out;
}

// |V_high ∩ V_vis| / |V_vis| with an empty-visibility guard; inputs sorted
inline double coverageRatio(const std::vector<std::int64_t>& vis,
                            const std::vector<std::int64_t>& vHigh) {
  if (vis.empty()) return 0.0;
  size_t shared = 0;
  auto it = vHigh.begin();
  for (std::int64_t v : vis) {
    it = std::lower_bound(it, vHigh.end(), v);
    if (it == vHigh.end()) break;
    if (*it == v) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(vis.size());
}

struct PromoteResult {
  bool promoted = false;
  double delta = 0.0;
  double gain = 0.0;
  double rho = 0.0;
};

// Promotion needs all three: divergence from every stored keyframe above
// τ_view (empty store counts as infinitely divergent), frustum reward above
// τ_info, and coverage of the high-uncertainty set above τ_ρ.
inline PromoteResult tryPromote(const Frame& frame, KeyframeStore& store,
                                const UncertaintyVolume& vol,
                                const CameraIntrinsics& intr,
                                const KeyframeParams& kp,
                                const PlannerParams& pp) {
  kp.validate();
  PromoteResult res;
  res.delta = std::numeric_limits<double>::infinity();
  for (const Keyframe& kf : store.items)
    res.delta = std::min(res.delta,
                         viewpointDivergence(frame.pose, kf.pose, intr, kp));
  std::vector<std::int64_t> vis = visibleVoxels(frame.pose, vol, intr, pp);
  res.gain = nbvReward(vol, vis, pp);
  std::vector<std::int64_t> vHigh = highUncertaintySet(vol, kp.tauH);
  res.rho = coverageRatio(vis, vHigh);
  res.promoted =
      res.delta > kp.tauView && res.gain > kp.tauInfo && res.rho > kp.tauRho;
  if (res.promoted) {
    Keyframe kf;
    kf.frameId = frame.id;
    kf.pose = frame.pose;
    kf.footprint = std::move(vis);
    kf.delta = res.delta;
    kf.gain = res.gain;
    kf.rho = res.rho;
    store.items.push_back(std::move(kf));
  }
  return res;
}

// Top-m store indices ranked by covisibility with the current footprint,
// then overlap with V_high, then recency. The newest keyframe always makes
// the cut, displacing the lowest-ranked pick if needed.
inline std::vector<int> selectWindow(const KeyframeStore& store,
                                     const std::vector<std::int64_t>& currentFootprint,
                                     const std::vector<std::int64_t>& vHigh,
                                     int m) {
  if (store.empty()) throw std::invalid_argument("selectWindow: empty store");
  if (m < 1) throw std::invalid_argument("selectWindow: m < 1");
  auto overlap = [](const std::vector<std::int64_t>& a,
                    const std::vector<std::int64_t>& b) {
    size_t n = 0;
    auto it = b.begin();
    for (std::int64_t v : a) {
      it = std::lower_bound(it, b.end(), v);
      if (it == b.end()) break;
      if (*it == v) ++n;
    }
    return n;
  };
  struct Ranked {
    size_t cov, high;
    int index;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i)
    ranked.push_back({overlap(store.items[i].footprint, currentFootprint),
                      overlap(store.items[i].footprint, vHigh),
                      static_cast<int>(i)});
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.cov != b.cov) return a.cov > b.cov;
    if (a.high != b.high) return a.high > b.high;
    return a.index > b.index;
  });
  size_t take = std::min(static_cast<size_t>(m), ranked.size());
  std::vector<int> window;
  for (size_t i = 0; i < take; ++i) window.push_back(ranked[i].index);
  int newest = static_cast<int>(store.size()) - 1;
  if (std::find(window.begin(), window.end(), newest) == window.end())
    window.back() = newest;
  return window;
}

inline void writeKeyframesJson(const KeyframeStore& store,
                               const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Keyframe& kf : store.items) {
    Eigen::Vector4d q = rotationToQuaternion(kf.pose.R);
    arr.push_back({{"id", kf.frameId},
                   {"position", {kf.pose.t.x(), kf.pose.t.y(), kf.pose.t.z()}},
                   {"quaternion", {q[0], q[1], q[2], q[3]}},
                   {"delta", kf.delta},
                   {"gain", kf.gain},
                   {"rho", kf.rho},
                   {"footprint", kf.footprint.size()}});
  }
  nlohmann::json j;
  j["keyframes"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace arecon
