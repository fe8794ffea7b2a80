#pragma once

#include <stdexcept>
#include <vector>

#include "arecon/implicit_field.hpp"
#include "arecon/splat_render.hpp"

namespace arecon {

struct SplatOptimizeParams {
  double wPhoto = 1.0;
  double wGeo = 1.0;
  double wAlign = 0.5;
  double wReg = 0.01;
  double lrMu = 5e-3;
  double lrS = 2e-3;
  double lrAlpha = 0.02;
  double lrC = 0.02;
  int alignSampleCap = 4000;  // E_align evaluated on a strided subset past this
  Vec3 background = Vec3::Zero();
};

struct SplatLossReport {
  double photo = 0.0;
  double geo = 0.0;
  double align = 0.0;
  double reg = 0.0;
  int validPixels = 0;
  int warnings = 0;  // frames with zero valid pixels
};

namespace detail {

// Raw photometric / geometric residual means over the valid mask. Uncovered
// pixels keep their sentinel depth 0, so they contribute a constant with no
// gradient path. When gradient images are requested they receive
// scale·∂term/∂pixel, ready for splatRenderBackward.
inline void photoGeoTerms(const Frame& frame, const SplatRenderOutput& render,
                          double& photo, double& geo, int& validCount,
                          ImageRgb* dEdC, ImageGray* dEdD, double photoScale,
                          double geoScale) {
  photo = geo = 0.0;
  validCount = 0;
  if (dEdC) *dEdC = ImageRgb(frame.image.width, frame.image.height, 3, 0.0);
  if (dEdD) *dEdD = ImageGray(frame.image.width, frame.image.height, 1, 0.0);
  for (int y = 0; y < frame.image.height; ++y)
    for (int x = 0; x < frame.image.width; ++x) {
      if (!frame.valid.at(x, y)) continue;
      ++validCount;
      Vec3 dc = pixelRgb(render.image, x, y) - pixelRgb(frame.image, x, y);
      photo += dc.squaredNorm();
      double dd = render.depth.at(x, y) - frame.depth.at(x, y);
      geo += dd * dd;
      if (dEdC) setPixelRgb(*dEdC, x, y, 2.0 * dc);
      if (dEdD) dEdD->at(x, y) = 2.0 * dd;
    }
  if (validCount == 0) return;
  double invN = 1.0 / validCount;
  photo *= invN;
  geo *= invN;
  if (dEdC)
    for (auto& v : dEdC->data) v *= photoScale * invN;
  if (dEdD)
    for (auto& v : dEdD->data) v *= geoScale * invN;
}

inline std::vector<int> alignSubset(const std::vector<int>& optSet, int cap) {
  if (static_cast<int>(optSet.size()) <= cap) return optSet;
  int stride = (static_cast<int>(optSet.size()) + cap - 1) / cap;
  std::vector<int> out;
  for (size_t i = 0; i < optSet.size(); i += stride) out.push_back(optSet[i]);
  return out;
}

}  // namespace detail

// Unweighted loss terms for one frame; E_align and E_reg run over the whole
// map. Matches the scalar definitions exactly (means, not sums).
inline SplatLossReport splatLosses(const SplatMap& map, const Frame& frame,
                                   const ImplicitField* field,
                                   const Vec3& background = Vec3::Zero()) {
  SplatLossReport rep;
  SplatRenderOutput render = renderSplats(map, frame.pose, frame.intrinsics, background);
  detail::photoGeoTerms(frame, render, rep.photo, rep.geo, rep.validPixels,
                        nullptr, nullptr, 1.0, 1.0);
  if (rep.validPixels == 0) ++rep.warnings;
  if (map.size() > 0) {
    double align = 0.0, reg = 0.0;
    for (const auto& p : map.prims()) {
      if (field) {
        double s = field->eval(p.mu).s;
        align += s * s;
      }
      reg += p.alpha * p.s * p.s;
    }
    rep.align = field ? align / map.size() : 0.0;
    rep.reg = reg / map.size();
  }
  return rep;
}

// Weighted window objective:
//   Σ_frames (w_photo·E_photo + w_geo·E_geo) + w_align·E_align + w_reg·E_reg
// with E_align / E_reg means over `optSet` (E_align on its capped subset).
// When `grads` is non-null it is resized to the map and accumulated into.
inline double evalWindowLoss(const SplatMap& map,
                             const std::vector<const Frame*>& window,
                             const ImplicitField* field,
                             const SplatOptimizeParams& p,
                             const std::vector<int>& optSet,
                             std::vector<SplatGrad>* grads, int* warnings) {
  if (grads) grads->assign(map.prims().size(), SplatGrad{});
  double value = 0.0;
  ImageRgb dEdC;
  ImageGray dEdD;
  for (const Frame* f : window) {
    SplatRenderCache cache;
    SplatRenderOutput render =
        renderSplats(map, f->pose, f->intrinsics, p.background, grads ? &cache : nullptr);
    double photo, geo;
    int nValid;
    detail::photoGeoTerms(*f, render, photo, geo, nValid,
                          grads ? &dEdC : nullptr, grads ? &dEdD : nullptr,
                          p.wPhoto, p.wGeo);
    if (nValid == 0 && warnings) ++*warnings;
    value += p.wPhoto * photo + p.wGeo * geo;
    if (grads) splatRenderBackward(map, cache, dEdC, dEdD, *grads);
  }
  if (!optSet.empty()) {
    if (field && p.wAlign != 0.0) {
      std::vector<int> sub = detail::alignSubset(optSet, p.alignSampleCap);
      double align = 0.0;
      for (int idx : sub) {
        Vec3 dsdp;
        double s = field->sdfWithGrad(map.prims()[idx].mu, dsdp);
        align += s * s;
        if (grads) (*grads)[idx].dMu += p.wAlign * 2.0 * s / sub.size() * dsdp;
      }
      value += p.wAlign * align / sub.size();
    }
    if (p.wReg != 0.0) {
      double reg = 0.0;
      for (int idx : optSet) {
        const auto& pr = map.prims()[idx];
        reg += pr.alpha * pr.s * pr.s;
        if (grads) {
          (*grads)[idx].dAlpha += p.wReg * pr.s * pr.s / optSet.size();
          (*grads)[idx].dS += p.wReg * 2.0 * pr.alpha * pr.s / optSet.size();
        }
      }
      value += p.wReg * reg / optSet.size();
    }
  }
  return value;
}

// Primitives contributing at least one composited sample to any window frame.
inline std::vector<int> windowVisibleSet(const SplatMap& map,
                                         const std::vector<const Frame*>& window,
                                         const Vec3& background) {
  std::vector<char> seen(map.prims().size(), 0);
  for (const Frame* f : window) {
    SplatRenderCache cache;
    renderSplats(map, f->pose, f->intrinsics, background, &cache);
    for (const auto& c : cache.contribs) seen[c.prim] = 1;
  }
  std::vector<int> out;
  for (size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.push_back(static_cast<int>(i));
  return out;
}

struct WindowOptResult {
  std::vector<double> trace;  // objective before each step, plus final value
  int optimized = 0;
  int skippedGradients = 0;
  int warnings = 0;
};

// Adam over (μ, s, α, c) of the primitives visible in the window at entry.
// Parameters are clamped to their invariants after every step; a primitive
// whose gradient goes non-finite is skipped for that step and counted.
inline WindowOptResult optimizeWindow(SplatMap& map,
                                      const std::vector<const Frame*>& window,
                                      const ImplicitField* field, int iters,
                                      const SplatOptimizeParams& p) {
  if (window.empty()) throw std::invalid_argument("window must be non-empty");
  WindowOptResult result;
  std::vector<int> optSet = windowVisibleSet(map, window, p.background);
  result.optimized = static_cast<int>(optSet.size());
  if (iters <= 0) return result;

  constexpr int kParams = 8;  // mu.xyz, s, alpha, c.rgb
  std::vector<double> m(optSet.size() * kParams, 0.0);
  std::vector<double> v(optSet.size() * kParams, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<SplatGrad> grads;

  for (int iter = 0; iter < iters; ++iter) {
    result.trace.push_back(evalWindowLoss(map, window, field, p, optSet, &grads,
                                          &result.warnings));
    double t = iter + 1;
    double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (size_t oi = 0; oi < optSet.size(); ++oi) {
      const SplatGrad& g = grads[optSet[oi]];
      double gv[kParams] = {g.dMu.x(), g.dMu.y(), g.dMu.z(), g.dS,
                            g.dAlpha,  g.dC.x(),  g.dC.y(),  g.dC.z()};
      bool finite = true;
      for (double x : gv) finite = finite && std::isfinite(x);
      if (!finite) {
        ++result.skippedGradients;
        continue;
      }
      double lr[kParams] = {p.lrMu, p.lrMu, p.lrMu, p.lrS,
                            p.lrAlpha, p.lrC, p.lrC, p.lrC};
      double step[kParams];
      for (int k = 0; k < kParams; ++k) {
        size_t idx = oi * kParams + k;
        m[idx] = b1 * m[idx] + (1.0 - b1) * gv[k];
        v[idx] = b2 * v[idx] + (1.0 - b2) * gv[k] * gv[k];
        step[k] = lr[k] * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + eps);
      }
      auto& prim = map.mutablePrims()[optSet[oi]];
      prim.mu = map.bounds().clamp(prim.mu - Vec3(step[0], step[1], step[2]));
      prim.s = clampd(prim.s - step[3], kSplatSMin, kSplatSMax);
      prim.alpha = clampd(prim.alpha - step[4], kAlphaMin, kAlphaMax);
      prim.c.x() = clampd(prim.c.x() - step[5], 0.0, 1.0);
      prim.c.y() = clampd(prim.c.y() - step[6], 0.0, 1.0);
      prim.c.z() = clampd(prim.c.z() - step[7], 0.0, 1.0);
    }
  }
  result.trace.push_back(
      evalWindowLoss(map, window, field, p, optSet, nullptr, nullptr));
  map.rebuildIndex();
  return result;
}

}  // namespace arecon
