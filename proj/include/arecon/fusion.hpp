#pragma once

#include <vector>

#include "arecon/frame.hpp"
#include "arecon/grid3.hpp"

namespace arecon {

// EWMA fusion of per-frame observed SDF into a voxel grid. Kept separate
// from the splat map so the uncertainty layers can consume the grid without
// pulling in rendering.
struct SdfFuseParams {
  double tauBand = 0.24;  // observation clamp, scene units
  double etaEma = 0.3;    // blend weight of the newest observation
};

struct ObservedSdfGrid {
  GridGeom geom;
  std::vector<double> value;   // clamped signed distance, + outside
  std::vector<double> weight;  // observation count per voxel

  explicit ObservedSdfGrid(const GridGeom& g)
      : geom(g), value(static_cast<size_t>(g.count()), 0.0),
        weight(static_cast<size_t>(g.count()), 0.0) {}

  bool observed(std::int64_t idx) const { return weight[idx] > 0.0; }
};

// For every voxel whose center projects into the frame with camera depth in
// [near, far] and a valid depth pixel, fold in o = clamp(D̄ − range, ±τ_band).
// The depth convention is range along the unit pixel ray, so the voxel-side
// distance is ‖X − camera‖. Depth is looked up at the containing pixel.
// Returns the number of voxels updated.
inline std::int64_t fuseObservedSdf(ObservedSdfGrid& grid, const Frame& frame,
                                    const SdfFuseParams& params) {
  requireValidPose(frame.pose);
  std::int64_t updated = 0;
  const Vec3 cam = frame.pose.position();
  for (int k = 0; k < grid.geom.nz; ++k)
    for (int j = 0; j < grid.geom.ny; ++j)
      for (int i = 0; i < grid.geom.nx; ++i) {
        Vec3 X = grid.geom.center(i, j, k);
        Vec3 pc = frame.pose.worldToCam(X);
        if (pc.z() <= 0.0) continue;
        double u, v;
        frame.intrinsics.project(pc, u, v);
        if (!frame.intrinsics.insideImage(u, v)) continue;
        double range = (X - cam).norm();
        if (range < frame.intrinsics.near || range > frame.intrinsics.far) continue;
        int px = static_cast<int>(u);
        int py = static_cast<int>(v);
        if (!frame.valid.at(px, py)) continue;
        double o = clampd(frame.depth.at(px, py) - range, -params.tauBand,
                          params.tauBand);
        std::int64_t idx = grid.geom.index(i, j, k);
        grid.value[idx] = (1.0 - params.etaEma) * grid.value[idx] +
                          params.etaEma * o;
        grid.weight[idx] += 1.0;
        ++updated;
      }
  return updated;
}

}  // namespace arecon
