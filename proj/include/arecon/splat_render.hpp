#pragma once

#include <algorithm>
#include <vector>

#include "arecon/splat_map.hpp"

namespace arecon {

constexpr double kSplatGClamp = 0.999;
constexpr double kCoverageEps = 1e-12;

struct SplatRenderOutput {
  ImageRgb image;   // Σ w_k c_k + T_end · background
  ImageGray depth;  // Σ w_k z_k / Σ w_k, 0 where nothing composites
  ImageGray alpha;  // Σ w_k = 1 − T_end
};

namespace detail {

struct ProjectedSplat {
  bool visible = false;
  double xc = 0, yc = 0, zc = 0;  // camera-space μ
  double u = 0, v = 0;            // projected center, pixels
  double sigmaPx = 0;             // screen-space std dev
  double range = 0;               // ‖μ − camera‖, the composited depth
};

struct SplatContrib {
  int pixel;   // y * width + x
  int prim;    // index into map.prims()
  double g;    // clamped opacity contribution
  double T;    // transmittance in front of this contribution
  bool clamped;
};

}  // namespace detail

// Everything the backward pass needs to re-walk the composite without
// re-sorting. Valid until the map mutates.
struct SplatRenderCache {
  std::vector<detail::ProjectedSplat> proj;
  std::vector<detail::SplatContrib> contribs;  // sorted by (pixel, range, id)
  std::vector<double> pixAlpha;                // Σ w per pixel
  std::vector<double> pixDepth;
  std::vector<double> pixTend;
  Pose pose;
  CameraIntrinsics intr;
  Vec3 background = Vec3::Zero();
};

// Depth-sorted front-to-back alpha compositing of isotropic Gaussians.
// Contributions are truncated at 3σ in screen space; the per-splat opacity
// g = α·exp(−d²/2σ′²) is capped just below 1 so transmittance never hits
// zero exactly. Sorting by (pixel, range, creation id) makes the composite
// independent of primitive list order.
inline SplatRenderOutput renderSplats(const SplatMap& map, const Pose& pose,
                                      const CameraIntrinsics& intr,
                                      const Vec3& background = Vec3::Zero(),
                                      SplatRenderCache* cache = nullptr) {
  requireValidPose(pose);
  requireValidIntrinsics(intr);
  const int W = intr.width, H = intr.height;
  const double fbar = 0.5 * (intr.fx + intr.fy);
  const auto& prims = map.prims();

  std::vector<detail::ProjectedSplat> proj(prims.size());
  std::vector<detail::SplatContrib> contribs;
  for (int pi = 0; pi < static_cast<int>(prims.size()); ++pi) {
    const auto& P = prims[pi];
    Vec3 pc = pose.worldToCam(P.mu);
    if (pc.z() < intr.near || pc.z() > intr.far) continue;
    auto& pr = proj[pi];
    pr.xc = pc.x();
    pr.yc = pc.y();
    pr.zc = pc.z();
    intr.project(pc, pr.u, pr.v);
    pr.sigmaPx = P.s * fbar / pr.zc;
    pr.range = (P.mu - pose.position()).norm();
    double r = 3.0 * pr.sigmaPx;
    if (pr.u + r < 0 || pr.u - r >= W || pr.v + r < 0 || pr.v - r >= H) continue;
    pr.visible = true;
    int x0 = std::max(0, static_cast<int>(std::floor(pr.u - r - 0.5)));
    int x1 = std::min(W - 1, static_cast<int>(std::ceil(pr.u + r - 0.5)));
    int y0 = std::max(0, static_cast<int>(std::floor(pr.v - r - 0.5)));
    int y1 = std::min(H - 1, static_cast<int>(std::ceil(pr.v + r - 0.5)));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        double du = px + 0.5 - pr.u;
        double dv = py + 0.5 - pr.v;
        double d2 = du * du + dv * dv;
        if (d2 > r * r) continue;
        double g = P.alpha * std::exp(-d2 / (2.0 * pr.sigmaPx * pr.sigmaPx));
        detail::SplatContrib c;
        c.pixel = py * W + px;
        c.prim = pi;
        c.clamped = g > kSplatGClamp;
        c.g = c.clamped ? kSplatGClamp : g;
        c.T = 1.0;
        contribs.push_back(c);
      }
  }
  std::sort(contribs.begin(), contribs.end(),
            [&](const detail::SplatContrib& a, const detail::SplatContrib& b) {
              if (a.pixel != b.pixel) return a.pixel < b.pixel;
              if (proj[a.prim].range != proj[b.prim].range)
                return proj[a.prim].range < proj[b.prim].range;
              return prims[a.prim].id < prims[b.prim].id;
            });

  SplatRenderOutput out;
  out.image = ImageRgb(W, H, 3);
  out.depth = ImageGray(W, H, 1);
  out.alpha = ImageGray(W, H, 1);
  std::vector<double> pixAlpha(static_cast<size_t>(W) * H, 0.0);
  std::vector<double> pixDepth(static_cast<size_t>(W) * H, 0.0);
  std::vector<double> pixTend(static_cast<size_t>(W) * H, 1.0);

  size_t i = 0;
  while (i < contribs.size()) {
    size_t j = i;
    int pixel = contribs[i].pixel;
    double T = 1.0;
    Vec3 col = Vec3::Zero();
    double sumW = 0.0, sumWZ = 0.0;
    for (; j < contribs.size() && contribs[j].pixel == pixel; ++j) {
      auto& c = contribs[j];
      c.T = T;
      double w = T * c.g;
      col += w * prims[c.prim].c;
      sumW += w;
      sumWZ += w * proj[c.prim].range;
      T *= (1.0 - c.g);
    }
    int px = pixel % W, py = pixel / W;
    setPixelRgb(out.image, px, py, col + T * background);
    pixAlpha[pixel] = sumW;
    pixDepth[pixel] = sumW > kCoverageEps ? sumWZ / sumW : 0.0;
    pixTend[pixel] = T;
    out.depth.at(px, py) = pixDepth[pixel];
    out.alpha.at(px, py) = sumW;
    i = j;
  }
  // pixels no contribution touched: pure background
  for (int py = 0; py < H; ++py)
    for (int px = 0; px < W; ++px)
      if (pixTend[static_cast<size_t>(py) * W + px] == 1.0)
        setPixelRgb(out.image, px, py, background);

  if (cache) {
    cache->proj = std::move(proj);
    cache->contribs = std::move(contribs);
    cache->pixAlpha = std::move(pixAlpha);
    cache->pixDepth = std::move(pixDepth);
    cache->pixTend = std::move(pixTend);
    cache->pose = pose;
    cache->intr = intr;
    cache->background = background;
  }
  return out;
}

struct SplatGrad {
  Vec3 dMu = Vec3::Zero();
  double dS = 0.0;
  double dAlpha = 0.0;
  Vec3 dC = Vec3::Zero();
};

// Reverse pass over a cached composite. dEdC / dEdD hold ∂E/∂(pixel color)
// and ∂E/∂(pixel depth); the suffix accumulator R carries Σ_{j>k} w_j ∂E/∂w_j
// plus the background-through-transmittance path, which is what ∂T/∂g_k
// multiplies. Clamped contributions pass no gradient into (α, s, μ) through g.
inline void splatRenderBackward(const SplatMap& map, const SplatRenderCache& cache,
                                const ImageRgb& dEdC, const ImageGray& dEdD,
                                std::vector<SplatGrad>& grads) {
  const auto& prims = map.prims();
  if (grads.size() != prims.size()) grads.assign(prims.size(), SplatGrad{});
  const int W = cache.intr.width;
  const double fbar = 0.5 * (cache.intr.fx + cache.intr.fy);

  struct Partial {
    double du = 0, dv = 0, dsig = 0, dz = 0;
    bool touched = false;
  };
  std::vector<Partial> part(prims.size());

  size_t i = 0;
  const auto& cs = cache.contribs;
  while (i < cs.size()) {
    size_t j = i;
    int pixel = cs[i].pixel;
    while (j < cs.size() && cs[j].pixel == pixel) ++j;
    int px = pixel % W, py = pixel / W;
    Vec3 gC = pixelRgb(dEdC, px, py);
    double gD = dEdD.at(px, py);
    if (gC.squaredNorm() == 0.0 && gD == 0.0) {
      i = j;
      continue;
    }
    double A = cache.pixAlpha[pixel];
    double D = cache.pixDepth[pixel];
    bool covered = A > kCoverageEps;
    double R = cache.pixTend[pixel] * gC.dot(cache.background);
    for (size_t k = j; k-- > i;) {
      const auto& c = cs[k];
      const auto& pr = cache.proj[c.prim];
      double w = c.T * c.g;
      double dEdw = gC.dot(prims[c.prim].c) +
                    (covered ? gD * (pr.range - D) / A : 0.0);
      double dEdg = c.T * dEdw - R / (1.0 - c.g);
      R += w * dEdw;
      auto& pp = part[c.prim];
      pp.touched = true;
      grads[c.prim].dC += w * gC;
      if (covered) pp.dz += gD * w / A;
      if (!c.clamped) {
        double G = c.g / prims[c.prim].alpha;
        grads[c.prim].dAlpha += dEdg * G;
        double dG = dEdg * prims[c.prim].alpha;
        double s2 = pr.sigmaPx * pr.sigmaPx;
        double du = px + 0.5 - pr.u;
        double dv = py + 0.5 - pr.v;
        double d2 = du * du + dv * dv;
        double dd2 = dG * G * (-1.0 / (2.0 * s2));
        pp.dsig += dG * G * d2 / (s2 * pr.sigmaPx);
        pp.du += dd2 * 2.0 * (pr.u - (px + 0.5));
        pp.dv += dd2 * 2.0 * (pr.v - (py + 0.5));
      }
    }
    i = j;
  }

  for (size_t pi = 0; pi < prims.size(); ++pi) {
    const auto& pp = part[pi];
    if (!pp.touched) continue;
    const auto& pr = cache.proj[pi];
    const auto& P = prims[pi];
    double dxc = pp.du * cache.intr.fx / pr.zc;
    double dyc = pp.dv * cache.intr.fy / pr.zc;
    double dzc = pp.du * (-cache.intr.fx * pr.xc / (pr.zc * pr.zc)) +
                 pp.dv * (-cache.intr.fy * pr.yc / (pr.zc * pr.zc)) +
                 pp.dsig * (-P.s * fbar / (pr.zc * pr.zc));
    grads[pi].dMu += cache.pose.R * Vec3(dxc, dyc, dzc) +
                     pp.dz * (P.mu - cache.pose.position()) / pr.range;
    grads[pi].dS += pp.dsig * fbar / pr.zc;
  }
}

}  // namespace arecon
