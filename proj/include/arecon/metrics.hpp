#pragma once

#include <array>
#include <limits>
#include <unordered_map>
#include <vector>

#include "arecon/implicit_field.hpp"
#include "arecon/sensor.hpp"
#include "arecon/splat_render.hpp"

namespace arecon {

// Geometry scores against the analytic scene. Acc is undefined (flagged) for
// an empty reconstruction; Com then degrades to the +inf sentinel and C.R.
// to zero.
struct GeometryReport {
  double acc = 0.0;
  double com = std::numeric_limits<double>::infinity();
  double cr = 0.0;  // percent
  bool accDefined = false;
};

struct RenderReport {
  double psnr = 0.0;
  double ssim = 0.0;
  int views = 0;
};

namespace detail {

// Hash grid over a fixed point set for nearest-point queries. Rings of cells
// are scanned outward; a ring at Chebyshev distance r cannot hold anything
// closer than (r-1)·cell, which bounds the scan.
class PointIndex {
 public:
  PointIndex(const std::vector<Vec3>& pts, double cell)
      : pts_(pts), cell_(cell) {
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
      cells_[key(coord(pts[i]))].push_back(i);
  }

  double nearestDistance(const Vec3& q) const {
    const double inf = std::numeric_limits<double>::infinity();
    if (pts_.empty()) return inf;
    std::array<int, 3> c = coord(q);
    double best = inf;
    for (int ring = 0;; ++ring) {
      if (best <= (ring - 1) * cell_) break;
      if (ring > 8 && best == inf) {
        // sparse set far from the query: rings degenerate, scan everything
        for (const Vec3& p : pts_) best = std::min(best, (p - q).norm());
        break;
      }
      scanRing(c, ring, q, best);
    }
    return best;
  }

 private:
  std::array<int, 3> coord(const Vec3& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_)),
            static_cast<int>(std::floor(p.y() / cell_)),
            static_cast<int>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const std::array<int, 3>& c) {
    auto u = [](int v) {
      return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20)));
    };
    return (u(c[0]) << 42) ^ (u(c[1]) << 21) ^ u(c[2]);
  }
  void scanRing(const std::array<int, 3>& c, int ring, const Vec3& q,
                double& best) const {
    for (int dk = -ring; dk <= ring; ++dk)
      for (int dj = -ring; dj <= ring; ++dj)
        for (int di = -ring; di <= ring; ++di) {
          if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != ring) continue;
          auto it = cells_.find(key({c[0] + di, c[1] + dj, c[2] + dk}));
          if (it == cells_.end()) continue;
          for (int idx : it->second)
            best = std::min(best, (pts_[idx] - q).norm());
        }
  }

  const std::vector<Vec3>& pts_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace detail

inline std::vector<Vec3> splatPoints(const SplatMap& map) {
  std::vector<Vec3> pts;
  pts.reserve(map.prims().size());
  for (const auto& p : map.prims()) pts.push_back(p.mu);
  return pts;
}

// Acc: mean |gt sdf| over (at most `samples`, strided) reconstruction points.
// Com: mean distance from gt surface samples to the nearest reconstruction
// point. C.R.: percent of gt samples within `threshold`. The gt side is
// sample_gt_surface with the given seed, so repeated calls are comparable.
inline GeometryReport evalGeometry(const std::vector<Vec3>& recon,
                                   const SceneSpec& scene, double threshold,
                                   const std::vector<Vec3>& gtSamples) {
  if (!(threshold > 0)) throw std::invalid_argument("threshold must be > 0");
  if (gtSamples.empty()) throw std::invalid_argument("no gt surface samples");
  GeometryReport rep;
  if (recon.empty()) return rep;

  rep.accDefined = true;
  const size_t cap = gtSamples.size();
  size_t stride = recon.size() > cap ? (recon.size() + cap - 1) / cap : 1;
  double accSum = 0.0;
  size_t accN = 0;
  for (size_t i = 0; i < recon.size(); i += stride) {
    accSum += std::abs(gtSdf(scene, recon[i]));
    ++accN;
  }
  rep.acc = accSum / static_cast<double>(accN);

  detail::PointIndex index(recon, std::max(threshold, 2.0 * scene.voxelSize));
  double comSum = 0.0;
  size_t within = 0;
  for (const Vec3& g : gtSamples) {
    double d = index.nearestDistance(g);
    comSum += d;
    if (d <= threshold) ++within;
  }
  rep.com = comSum / static_cast<double>(gtSamples.size());
  rep.cr = 100.0 * static_cast<double>(within) / static_cast<double>(gtSamples.size());
  return rep;
}

inline GeometryReport evalGeometry(const std::vector<Vec3>& recon,
                                   const SceneSpec& scene, double threshold,
                                   int samples = 20000, std::uint64_t seed = 0) {
  return evalGeometry(recon, scene, threshold,
                      sampleGtSurface(scene, samples, seed));
}

// ------------------------------------------------------------- image scores

// 10·log10(1/MSE) over all pixels and channels, capped at 99 dB so identical
// images stay finite.
inline double psnr(const ImageRgb& a, const ImageRgb& b) {
  if (!a.sameShape(b)) throw std::invalid_argument("psnr: shape mismatch");
  if (a.data.empty()) throw std::invalid_argument("psnr: empty image");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) mse += sqr(a.data[i] - b.data[i]);
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM over all fully-interior 11x11 windows and channels. Gaussian
// window sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.
inline double ssim(const ImageRgb& a, const ImageRgb& b) {
  if (!a.sameShape(b)) throw std::invalid_argument("ssim: shape mismatch");
  constexpr int kHalf = 5;
  if (a.width < 2 * kHalf + 1 || a.height < 2 * kHalf + 1)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double w[2 * kHalf + 1][2 * kHalf + 1];
  double wsum = 0.0;
  for (int dy = -kHalf; dy <= kHalf; ++dy)
    for (int dx = -kHalf; dx <= kHalf; ++dx) {
      double g = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      w[dy + kHalf][dx + kHalf] = g;
      wsum += g;
    }
  for (auto& row : w)
    for (double& v : row) v /= wsum;

  const double c1 = sqr(0.01), c2 = sqr(0.03);
  double total = 0.0;
  long count = 0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int y = kHalf; y < a.height - kHalf; ++y)
      for (int x = kHalf; x < a.width - kHalf; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int dy = -kHalf; dy <= kHalf; ++dy)
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            double wv = w[dy + kHalf][dx + kHalf];
            double va = a.at(x + dx, y + dy, ch);
            double vb = b.at(x + dx, y + dy, ch);
            ma += wv * va;
            mb += wv * vb;
            maa += wv * va * va;
            mbb += wv * vb * vb;
            mab += wv * va * vb;
          }
        double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

// Renders the splat map at each pose against a clean (noise-free) oracle
// render of the same view; reports the mean PSNR / SSIM.
inline RenderReport evalRender(const SplatMap& map, const std::vector<Pose>& poses,
                               const SceneSpec& scene, const CameraIntrinsics& intr) {
  if (poses.empty()) throw std::invalid_argument("need at least one holdout pose");
  RenderReport rep;
  rep.views = static_cast<int>(poses.size());
  for (const Pose& pose : poses) {
    Frame ref = renderRgbd(scene, pose, intr);
    SplatRenderOutput out = renderSplats(map, pose, intr, scene.background);
    rep.psnr += psnr(out.image, ref.image);
    rep.ssim += ssim(out.image, ref.image);
  }
  rep.psnr /= rep.views;
  rep.ssim /= rep.views;
  return rep;
}

// MAD between an arbitrary SDF estimate and the scene, over uniform samples
// restricted to the near-surface band |gt sdf| < 4 voxels.
template <typename SdfFn>
double madNearSurface(SdfFn&& est, const SceneSpec& scene, int n, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("sample count must be > 0");
  Rng rng(hashMix(seed ^ 0x6ad5eedULL));
  const double band = 4.0 * scene.voxelSize;
  double sum = 0.0;
  int got = 0;
  long attempts = 0;
  const long maxAttempts = 20000L + 2000L * static_cast<long>(n);
  while (got < n) {
    if (++attempts > maxAttempts)
      throw std::runtime_error("near-surface band too thin to sample");
    Vec3 p = rng.uniformInBox(scene.bounds);
    double gt = gtSdf(scene, p);
    if (std::abs(gt) >= band) continue;
    sum += std::abs(est(p) - gt);
    ++got;
  }
  return sum / static_cast<double>(n);
}

inline double evalMad(const ImplicitField& field, const SceneSpec& scene, int n,
                      std::uint64_t seed) {
  return madNearSurface([&](const Vec3& p) { return field.eval(p).s; }, scene,
                        n, seed);
}

// Per-epoch curve row plus the end-of-run scalars the CLI reports.
struct MetricsRow {
  int step = 0;
  double acc = 0, com = 0, cr = 0, mad = 0, psnr = 0, ssim = 0;
  int splats = 0, keyframes = 0;
  double fieldLoss = 0;
};

struct MetricsReport {
  double acc = 0, com = 0, cr = 0, mad = 0, psnr = 0, ssim = 0;
  bool accDefined = false;
  std::vector<MetricsRow> curve;
};

}  // namespace arecon
