#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arecon/fusion.hpp"
#include "arecon/implicit_field.hpp"
#include "arecon/splat_render.hpp"

namespace arecon {

// Weights and thresholds of the hierarchical uncertainty volume. The α
// triple is normalized at fusion time; temporal thresholds are scene units.
struct FusionParams {
  double alpha1 = 0.4, alpha2 = 0.4, alpha3 = 0.2;  // u_imp / u_exp / u_time
  double beta1 = 1.0, beta2 = 0.5;                  // temporal term
  double tauS = 0.24;   // new-surface SDF band
  double tauN = 0.05;   // newly-appeared change threshold
  double tauC = 0.08;   // geometry-change threshold
  double tauF = 0.12;   // free-space flip threshold
  double lambdaImp = 0.5, lambdaExp = 0.5;  // hybrid entropy mix
  int topK = 3;                             // |C_high| views to back-project
  double sigmaOcc = 0.12;                   // implicit occupancy sharpness
  double wDepth = 1.0, wColor = 0.25;       // residual mix for u_exp

  void validate() const {
    if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0 ||
        alpha1 + alpha2 + alpha3 <= 0)
      throw std::invalid_argument("fusion alphas must be >= 0 and not all zero");
    if (beta1 < 0 || beta2 < 0 || lambdaImp < 0 || lambdaExp < 0)
      throw std::invalid_argument("fusion betas/lambdas must be >= 0");
    if (topK < 1) throw std::invalid_argument("topK must be >= 1");
    if (sigmaOcc <= 0) throw std::invalid_argument("sigmaOcc must be > 0");
  }
};

// One lattice, many scalar layers. Occupancy starts at the unknown prior 0.5
// so untouched space carries maximal entropy; every other layer starts 0.
struct UncertaintyVolume {
  GridGeom geom;
  std::vector<double> uImp, uExp, uTime, uFinal;
  std::vector<double> occupancy;
  std::vector<double> entropy;
  // per-source entropy halves, kept for the planner's gain diagnostics
  std::vector<double> entropyImp, entropyExp;

  explicit UncertaintyVolume(const GridGeom& g)
      : geom(g),
        uImp(static_cast<size_t>(g.count()), 0.0),
        uExp(static_cast<size_t>(g.count()), 0.0),
        uTime(static_cast<size_t>(g.count()), 0.0),
        uFinal(static_cast<size_t>(g.count()), 0.0),
        occupancy(static_cast<size_t>(g.count()), 0.5),
        entropy(static_cast<size_t>(g.count()), 0.0),
        entropyImp(static_cast<size_t>(g.count()), 0.0),
        entropyExp(static_cast<size_t>(g.count()), 0.0) {}

  std::int64_t count() const { return geom.count(); }
};

// Per-voxel SDF state frozen at a keyframe; consecutive snapshots feed the
// temporal masks.
struct SdfSnapshot {
  GridGeom geom;
  std::vector<double> s;
  int frameId = -1;

  static SdfSnapshot fromObserved(const ObservedSdfGrid& grid, int frameId) {
    SdfSnapshot snap;
    snap.geom = grid.geom;
    snap.s = grid.value;
    snap.frameId = frameId;
    return snap;
  }
};

struct TemporalMasks {
  GridGeom geom;
  std::vector<std::uint8_t> newSurface, change, freeSpace;
};

// u_imp(v): the softplus-normalized uncertainty head at each voxel center.
inline void computeUImp(UncertaintyVolume& vol, const ImplicitField& field) {
  for (std::int64_t idx = 0; idx < vol.count(); ++idx)
    vol.uImp[idx] = field.eval(vol.geom.center(idx)).sigma2;
}

struct ResidualMaps {
  ImageGray depth;  // |D_render − D̄| on valid pixels
  ImageGray rgb;    // Σ_channels |I_render − Ī| on valid pixels
  ImageGray renderDepth;  // for the back-projection occlusion gate
};

inline ResidualMaps residualMaps(const SplatMap& map, const Frame& frame,
                                 const Vec3& background = Vec3::Zero()) {
  SplatRenderOutput render =
      renderSplats(map, frame.pose, frame.intrinsics, background);
  ResidualMaps out;
  out.depth = ImageGray(frame.image.width, frame.image.height, 1, 0.0);
  out.rgb = ImageGray(frame.image.width, frame.image.height, 1, 0.0);
  out.renderDepth = render.depth;
  for (int y = 0; y < frame.image.height; ++y)
    for (int x = 0; x < frame.image.width; ++x) {
      if (!frame.valid.at(x, y)) continue;
      out.depth.at(x, y) = std::abs(render.depth.at(x, y) - frame.depth.at(x, y));
      out.rgb.at(x, y) =
          (pixelRgb(render.image, x, y) - pixelRgb(frame.image, x, y))
              .cwiseAbs()
              .sum();
    }
  return out;
}

// One high-uncertainty view prepared for back-projection.
struct ViewResidual {
  ResidualMaps maps;
  Pose pose;
  CameraIntrinsics intr;
};

namespace detail {

// Bilinear sample in pixel-center coordinates, clamped at the border.
inline double bilinear(const ImageGray& img, double u, double v) {
  double x = clampd(u - 0.5, 0.0, img.width - 1.0);
  double y = clampd(v - 0.5, 0.0, img.height - 1.0);
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, img.width - 1);
  int y1 = std::min(y0 + 1, img.height - 1);
  double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x1, y0) +
         (1 - fx) * fy * img.at(x0, y1) + fx * fy * img.at(x1, y1);
}

}  // namespace detail

// u_exp(v) = (1/|C_high|) Σ_views bilinear(w_d·E_depth + w_c·E_rgb) at the
// voxel's projected pixel. A view only contributes where the voxel lies in
// the rendered surface band (|range − rendered depth| ≤ 2 voxels, rendered
// depth looked up at the containing pixel); voxels no view observes keep
// their prior value.
inline void backprojectUExp(UncertaintyVolume& vol,
                            const std::vector<ViewResidual>& views,
                            const FusionParams& params) {
  if (views.empty()) throw std::invalid_argument("need at least one view");
  const double band = 2.0 * vol.geom.voxel;
  std::vector<ImageGray> combined(views.size());
  for (size_t t = 0; t < views.size(); ++t) {
    const auto& m = views[t].maps;
    combined[t] = ImageGray(m.depth.width, m.depth.height, 1, 0.0);
    for (size_t i = 0; i < combined[t].data.size(); ++i)
      combined[t].data[i] =
          params.wDepth * m.depth.data[i] + params.wColor * m.rgb.data[i];
  }
  const double invViews = 1.0 / static_cast<double>(views.size());
  for (std::int64_t idx = 0; idx < vol.count(); ++idx) {
    Vec3 X = vol.geom.center(idx);
    double acc = 0.0;
    bool observed = false;
    for (size_t t = 0; t < views.size(); ++t) {
      const auto& view = views[t];
      Vec3 pc = view.pose.worldToCam(X);
      if (pc.z() <= 0.0) continue;
      double u, v;
      view.intr.project(pc, u, v);
      if (!view.intr.insideImage(u, v)) continue;
      double range = (X - view.pose.position()).norm();
      double rendered =
          view.maps.renderDepth.at(static_cast<int>(u), static_cast<int>(v));
      if (std::abs(range - rendered) > band) continue;
      acc += detail::bilinear(combined[t], u, v);
      observed = true;
    }
    if (observed) vol.uExp[idx] = acc * invViews;
  }
}

inline TemporalMasks temporalMasks(const SdfSnapshot& st, const SdfSnapshot& prev,
                                   const FusionParams& p) {
  if (!st.geom.sameGeometry(prev.geom))
    throw std::invalid_argument("snapshots must share geometry");
  TemporalMasks m;
  m.geom = st.geom;
  size_t n = st.s.size();
  m.newSurface.assign(n, 0);
  m.change.assign(n, 0);
  m.freeSpace.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    double ds = st.s[i] - prev.s[i];
    m.newSurface[i] = (st.s[i] >= 0.0 && st.s[i] <= p.tauS && ds > p.tauN) ? 1 : 0;
    m.change[i] = std::abs(ds) > p.tauC ? 1 : 0;
    m.freeSpace[i] = (st.s[i] > p.tauF && prev.s[i] < -p.tauF) ? 1 : 0;
  }
  return m;
}

// u_time(v) = β₁|ΔS_t(v)| + β₂·1[v in any temporal mask]
inline void computeUTime(UncertaintyVolume& vol, const SdfSnapshot& st,
                         const SdfSnapshot& prev, const TemporalMasks& masks,
                         const FusionParams& p) {
  if (!st.geom.sameGeometry(vol.geom) || !masks.geom.sameGeometry(vol.geom))
    throw std::invalid_argument("snapshot/mask geometry mismatch");
  for (std::int64_t i = 0; i < vol.count(); ++i) {
    double ds = st.s[i] - prev.s[i];
    double inUnion =
        (masks.newSurface[i] || masks.change[i] || masks.freeSpace[i]) ? 1.0 : 0.0;
    vol.uTime[i] = p.beta1 * std::abs(ds) + p.beta2 * inUnion;
  }
}

// u_final = normalized convex combination of the three layers.
inline void fuseFinal(UncertaintyVolume& vol, const FusionParams& p) {
  p.validate();
  double sum = p.alpha1 + p.alpha2 + p.alpha3;
  double a1 = p.alpha1 / sum, a2 = p.alpha2 / sum, a3 = p.alpha3 / sum;
  for (std::int64_t i = 0; i < vol.count(); ++i)
    vol.uFinal[i] = a1 * vol.uImp[i] + a2 * vol.uExp[i] + a3 * vol.uTime[i];
}

// H_hybrid = λ_imp·H[p_F] + λ_exp·H[p_G] with p_F = σ(−s/σ_occ) from the
// implicit SDF and p_G = 1 − exp(−ρ) from the splat density. Also refreshes
// the occupancy layer O(v) = max(p_F, p_G).
inline void hybridEntropy(UncertaintyVolume& vol, const ImplicitField& field,
                          const SplatMap& map, const FusionParams& p) {
  std::vector<double> rho = densityLayer(map, vol.geom);
  for (std::int64_t i = 0; i < vol.count(); ++i) {
    double s = field.eval(vol.geom.center(i)).s;
    double pF = sigmoid(-s / p.sigmaOcc);
    double pG = 1.0 - std::exp(-rho[i]);
    vol.entropyImp[i] = p.lambdaImp * binaryEntropy(pF);
    vol.entropyExp[i] = p.lambdaExp * binaryEntropy(pG);
    vol.entropy[i] = vol.entropyImp[i] + vol.entropyExp[i];
    vol.occupancy[i] = std::max(pF, pG);
  }
}

// Grid search on the α simplex maximizing Pearson correlation between the
// fused layer and a per-voxel target (realized error). Exposed as the
// optional calibration mode; the pipeline default keeps fixed weights.
inline Vec3 calibrateFusionWeights(const UncertaintyVolume& vol,
                                   const std::vector<double>& target,
                                   int steps = 20) {
  if (target.size() != vol.uImp.size())
    throw std::invalid_argument("target size mismatch");
  auto pearson = [&](double a1, double a2, double a3) {
    double mx = 0, my = 0;
    size_t n = target.size();
    std::vector<double> fused(n);
    for (size_t i = 0; i < n; ++i) {
      fused[i] = a1 * vol.uImp[i] + a2 * vol.uExp[i] + a3 * vol.uTime[i];
      mx += fused[i];
      my += target[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
      sxy += (fused[i] - mx) * (target[i] - my);
      sxx += sqr(fused[i] - mx);
      syy += sqr(target[i] - my);
    }
    if (sxx <= 0 || syy <= 0) return -2.0;
    return sxy / std::sqrt(sxx * syy);
  };
  Vec3 best(0.4, 0.4, 0.2);
  double bestCorr = -3.0;
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j + i <= steps; ++j) {
      int k = steps - i - j;
      double a1 = double(i) / steps, a2 = double(j) / steps, a3 = double(k) / steps;
      double c = pearson(a1, a2, a3);
      if (c > bestCorr) {
        bestCorr = c;
        best = Vec3(a1, a2, a3);
      }
    }
  return best;
}

// Raw float32 dump (x fastest, then y, then z) plus a JSON sidecar with the
// lattice geometry. basePath gets ".raw" / ".json" appended.
inline void writeVolumeLayer(const GridGeom& geom, const std::vector<double>& layer,
                             const std::string& layerName, int frameId,
                             const std::string& basePath) {
  if (layer.size() != static_cast<size_t>(geom.count()))
    throw std::invalid_argument("layer size mismatch");
  std::vector<float> raw(layer.begin(), layer.end());
  writeRawFloat(raw, basePath + ".raw");
  nlohmann::json j;
  j["layer"] = layerName;
  j["frame"] = frameId;
  j["nx"] = geom.nx;
  j["ny"] = geom.ny;
  j["nz"] = geom.nz;
  j["voxel"] = geom.voxel;
  j["origin"] = {geom.origin.x(), geom.origin.y(), geom.origin.z()};
  j["dtype"] = "float32";
  j["order"] = "x-fastest";
  std::ofstream out(basePath + ".json");
  if (!out) throw std::runtime_error("cannot open " + basePath + ".json");
  out << j.dump(2) << "\n";
}

}  // namespace arecon
