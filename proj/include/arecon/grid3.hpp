#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

#include "arecon/math.hpp"

namespace arecon {

// Shared voxel lattice geometry. Voxel (i,j,k) spans
// [origin + (i,j,k)*voxel, origin + (i+1,j+1,k+1)*voxel).
struct GridGeom {
  Vec3 origin{Vec3::Zero()};
  double voxel = 0.1;
  int nx = 0, ny = 0, nz = 0;

  static GridGeom fromBounds(const Aabb& bounds, double voxelSize) {
    GridGeom g;
    g.origin = bounds.min;
    g.voxel = voxelSize;
    Vec3 e = bounds.extent();
    g.nx = std::max(1, static_cast<int>(std::ceil(e.x() / voxelSize - 1e-9)));
    g.ny = std::max(1, static_cast<int>(std::ceil(e.y() / voxelSize - 1e-9)));
    g.nz = std::max(1, static_cast<int>(std::ceil(e.z() / voxelSize - 1e-9)));
    return g;
  }

  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  bool inGrid(int i, int j, int k) const {
    return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
  }
  std::int64_t index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(k) * ny + j) * nx + i;
  }
  void coords(std::int64_t idx, int& i, int& j, int& k) const {
    i = static_cast<int>(idx % nx);
    j = static_cast<int>((idx / nx) % ny);
    k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
  }
  Vec3 center(int i, int j, int k) const {
    return origin + voxel * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  Vec3 center(std::int64_t idx) const {
    int i, j, k;
    coords(idx, i, j, k);
    return center(i, j, k);
  }
  // Voxel containing p, or false when outside the lattice.
  bool locate(const Vec3& p, int& i, int& j, int& k) const {
    Vec3 q = (p - origin) / voxel;
    i = static_cast<int>(std::floor(q.x()));
    j = static_cast<int>(std::floor(q.y()));
    k = static_cast<int>(std::floor(q.z()));
    return inGrid(i, j, k);
  }
  bool sameGeometry(const GridGeom& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && voxel == o.voxel &&
           (origin - o.origin).norm() < 1e-12;
  }
  Aabb bounds() const {
    Aabb b;
    b.min = origin;
    b.max = origin + voxel * Vec3(nx, ny, nz);
    return b;
  }
};

// Amanatides–Woo voxel traversal from `origin` along unit `dir` up to tMax.
// Visits voxels in order; visitor returns false to stop. Entry point outside
// the lattice is advanced to the lattice boundary first.
inline void traverseVoxels(const GridGeom& g, const Vec3& rayOrigin,
                           const Vec3& dir, double tMax,
                           const std::function<bool(int, int, int, double)>& visit) {
  Aabb box = g.bounds();
  double tEnter = 0.0;
  // clip to lattice
  double t0 = 0.0, t1 = tMax;
  for (int a = 0; a < 3; ++a) {
    double d = dir[a];
    if (std::abs(d) < 1e-15) {
      if (rayOrigin[a] < box.min[a] || rayOrigin[a] > box.max[a]) return;
      continue;
    }
    double ta = (box.min[a] - rayOrigin[a]) / d;
    double tb = (box.max[a] - rayOrigin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return;
  tEnter = t0;

  Vec3 p = rayOrigin + (tEnter + 1e-12) * dir;
  int i, j, k;
  if (!g.locate(p, i, j, k)) return;

  int stepI = dir.x() > 0 ? 1 : -1;
  int stepJ = dir.y() > 0 ? 1 : -1;
  int stepK = dir.z() > 0 ? 1 : -1;
  auto boundary = [&](int idx, int axis, int step) {
    double edge = g.origin[axis] + g.voxel * (idx + (step > 0 ? 1 : 0));
    return std::abs(dir[axis]) < 1e-15
               ? std::numeric_limits<double>::infinity()
               : (edge - rayOrigin[axis]) / dir[axis];
  };
  double tNextX = boundary(i, 0, stepI);
  double tNextY = boundary(j, 1, stepJ);
  double tNextZ = boundary(k, 2, stepK);
  double tDX = std::abs(dir.x()) < 1e-15 ? std::numeric_limits<double>::infinity()
                                         : g.voxel / std::abs(dir.x());
  double tDY = std::abs(dir.y()) < 1e-15 ? std::numeric_limits<double>::infinity()
                                         : g.voxel / std::abs(dir.y());
  double tDZ = std::abs(dir.z()) < 1e-15 ? std::numeric_limits<double>::infinity()
                                         : g.voxel / std::abs(dir.z());

  double t = tEnter;
  while (t <= t1) {
    if (!visit(i, j, k, t)) return;
    if (tNextX <= tNextY && tNextX <= tNextZ) {
      t = tNextX;
      tNextX += tDX;
      i += stepI;
      if (i < 0 || i >= g.nx) return;
    } else if (tNextY <= tNextZ) {
      t = tNextY;
      tNextY += tDY;
      j += stepJ;
      if (j < 0 || j >= g.ny) return;
    } else {
      t = tNextZ;
      tNextZ += tDZ;
      k += stepK;
      if (k < 0 || k >= g.nz) return;
    }
  }
}

}  // namespace arecon
