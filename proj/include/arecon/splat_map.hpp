#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "arecon/frame.hpp"
#include "arecon/grid3.hpp"
#include "arecon/math.hpp"

namespace arecon {

constexpr double kSplatSMin = 1e-3;
constexpr double kSplatSMax = 0.35;
constexpr double kAlphaMin = 0.005;
constexpr double kAlphaMax = 0.995;
constexpr double kAlphaInit = 0.7;

// Isotropic Gaussian primitive: Σ = s²I.
struct GaussianPrimitive {
  Vec3 mu = Vec3::Zero();
  double s = 0.05;
  double alpha = kAlphaInit;
  Vec3 c = Vec3::Zero();
  int id = -1;       // stable creation id, used for render tie-breaks
  int frameId = -1;  // frame that spawned it
};

// Growable splat set with a uniform hash index over μ. The index must be
// rebuilt after any mutation batch that moves primitives.
class SplatMap {
 public:
  SplatMap(const Aabb& bounds, double voxelSize)
      : bounds_(bounds), cell_(voxelSize), rMerge_(0.5 * voxelSize) {}

  const std::vector<GaussianPrimitive>& prims() const { return prims_; }
  std::vector<GaussianPrimitive>& mutablePrims() { return prims_; }
  int size() const { return static_cast<int>(prims_.size()); }
  const Aabb& bounds() const { return bounds_; }
  double mergeRadius() const { return rMerge_; }

  void insert(GaussianPrimitive p) {
    p.id = nextId_++;
    prims_.push_back(p);
    cells_[cellKey(p.mu)].push_back(static_cast<int>(prims_.size()) - 1);
  }

  void rebuildIndex() {
    cells_.clear();
    for (int i = 0; i < size(); ++i) cells_[cellKey(prims_[i].mu)].push_back(i);
  }

  std::vector<int> queryNear(const Vec3& p, double r) const {
    std::vector<int> out;
    int span = static_cast<int>(std::ceil(r / cell_));
    int ci, cj, ck;
    cellCoords(p, ci, cj, ck);
    for (int k = ck - span; k <= ck + span; ++k)
      for (int j = cj - span; j <= cj + span; ++j)
        for (int i = ci - span; i <= ci + span; ++i) {
          auto it = cells_.find(packKey(i, j, k));
          if (it == cells_.end()) continue;
          for (int idx : it->second)
            if ((prims_[idx].mu - p).norm() <= r) out.push_back(idx);
        }
    return out;
  }

  // Back-projects every stride-th valid pixel; the merge radius suppresses
  // duplicates against everything already in the map (including earlier
  // pixels of the same frame). Returns the number added.
  int spawnFromFrame(const Frame& frame, int stride) {
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    requireValidPose(frame.pose);
    const double fbar = 0.5 * (frame.intrinsics.fx + frame.intrinsics.fy);
    int added = 0;
    for (int py = 0; py < frame.image.height; py += stride)
      for (int px = 0; px < frame.image.width; px += stride) {
        if (!frame.valid.at(px, py)) continue;
        double d = frame.depth.at(px, py);
        Vec3 p = frame.pose.position() +
                 d * frame.pose.dirToWorld(frame.intrinsics.rayDir(px, py));
        if (!queryNear(p, rMerge_).empty()) continue;
        GaussianPrimitive g;
        g.mu = p;
        g.s = clampd(0.5 * stride * d / fbar, kSplatSMin, kSplatSMax);
        g.alpha = kAlphaInit;
        g.c = pixelRgb(frame.image, px, py);
        g.frameId = frame.id;
        insert(g);
        ++added;
      }
    return added;
  }

  // Drops primitives whose opacity decayed below the floor; ids survive.
  int cullLowOpacity(double minAlpha) {
    int before = size();
    std::vector<GaussianPrimitive> kept;
    kept.reserve(prims_.size());
    for (const auto& p : prims_)
      if (p.alpha >= minAlpha) kept.push_back(p);
    prims_ = std::move(kept);
    rebuildIndex();
    return before - size();
  }

  // ρ(x) = Σ α_i exp(−‖x−μ_i‖²/(2 s_i²)) truncated at 3σ; gather form for
  // point queries. densityLayer below is the scatter form over a lattice,
  // identical math.
  double densityAt(const Vec3& x) const {
    double rho = 0.0;
    for (int idx : queryNear(x, 3.0 * kSplatSMax)) {
      const auto& p = prims_[idx];
      double d2 = (x - p.mu).squaredNorm();
      if (d2 <= 9.0 * p.s * p.s) rho += p.alpha * std::exp(-d2 / (2.0 * p.s * p.s));
    }
    return rho;
  }

 private:
  static std::uint64_t packKey(int i, int j, int k) {
    auto u = [](int v) {
      return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20)));
    };
    return (u(i) << 42) ^ (u(j) << 21) ^ u(k);
  }
  void cellCoords(const Vec3& p, int& i, int& j, int& k) const {
    i = static_cast<int>(std::floor(p.x() / cell_));
    j = static_cast<int>(std::floor(p.y() / cell_));
    k = static_cast<int>(std::floor(p.z() / cell_));
  }
  std::uint64_t cellKey(const Vec3& p) const {
    int i, j, k;
    cellCoords(p, i, j, k);
    return packKey(i, j, k);
  }

  std::vector<GaussianPrimitive> prims_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
  Aabb bounds_;
  double cell_;
  double rMerge_;
  int nextId_ = 0;
};

// Per-voxel-center primitive density over a lattice, one truncated Gaussian
// splat per primitive.
inline std::vector<double> densityLayer(const SplatMap& map, const GridGeom& geom) {
  std::vector<double> rho(static_cast<size_t>(geom.count()), 0.0);
  for (const auto& p : map.prims()) {
    double r = 3.0 * p.s;
    Vec3 lo = (p.mu - Vec3(r, r, r) - geom.origin) / geom.voxel;
    Vec3 hi = (p.mu + Vec3(r, r, r) - geom.origin) / geom.voxel;
    int i0 = std::max(0, static_cast<int>(std::floor(lo.x())));
    int j0 = std::max(0, static_cast<int>(std::floor(lo.y())));
    int k0 = std::max(0, static_cast<int>(std::floor(lo.z())));
    int i1 = std::min(geom.nx - 1, static_cast<int>(std::floor(hi.x())));
    int j1 = std::min(geom.ny - 1, static_cast<int>(std::floor(hi.y())));
    int k1 = std::min(geom.nz - 1, static_cast<int>(std::floor(hi.z())));
    for (int k = k0; k <= k1; ++k)
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          double d2 = (geom.center(i, j, k) - p.mu).squaredNorm();
          if (d2 <= r * r)
            rho[geom.index(i, j, k)] += p.alpha * std::exp(-d2 / (2.0 * p.s * p.s));
        }
  }
  return rho;
}

// ASCII PLY point export with per-point radius/opacity/color.
inline void writeSplatPly(const SplatMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << map.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float radius\nproperty float opacity\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  auto byte = [](double v) {
    return static_cast<int>(clampd(v, 0.0, 1.0) * 255.0 + 0.5);
  };
  for (const auto& p : map.prims()) {
    out << static_cast<float>(p.mu.x()) << " " << static_cast<float>(p.mu.y())
        << " " << static_cast<float>(p.mu.z()) << " "
        << static_cast<float>(p.s) << " " << static_cast<float>(p.alpha) << " "
        << byte(p.c.x()) << " " << byte(p.c.y()) << " " << byte(p.c.z()) << "\n";
  }
}

}  // namespace arecon
