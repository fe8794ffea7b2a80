#pragma once

#include <cstddef>
#include <stdexcept>

#include "arecon/math.hpp"

namespace arecon {

// Dense trainable feature lattice. Resolution counts cells; features live on
// the (n+1)^3 vertices and are interpolated trilinearly inside each cell.
struct FeatureGrid {
  Vec3 origin = Vec3::Zero();
  double cell = 0.1;
  int nx = 2, ny = 2, nz = 2;  // cells per axis, >= 2
  int F = 8;                   // feature channels

  static FeatureGrid fromBounds(const Aabb& b, double cellSize, int features) {
    if (!(cellSize > 0) || features < 1 || !b.valid())
      throw std::invalid_argument("bad feature grid parameters");
    FeatureGrid g;
    g.origin = b.min;
    g.cell = cellSize;
    Vec3 e = b.extent();
    g.nx = std::max(2, static_cast<int>(std::ceil(e.x() / cellSize)));
    g.ny = std::max(2, static_cast<int>(std::ceil(e.y() / cellSize)));
    g.nz = std::max(2, static_cast<int>(std::ceil(e.z() / cellSize)));
    g.F = features;
    return g;
  }

  int vnx() const { return nx + 1; }
  int vny() const { return ny + 1; }
  int vnz() const { return nz + 1; }
  std::size_t vertexCount() const {
    return static_cast<std::size_t>(vnx()) * vny() * vnz();
  }
  std::size_t paramCount() const { return vertexCount() * F; }
  std::size_t vertexIndex(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * vny() + j) * vnx() + i;
  }
  Aabb bounds() const {
    return {origin, origin + cell * Vec3(nx, ny, nz)};
  }
};

// The 8-vertex interpolation stencil at a query point, with weight gradients
// w.r.t. position. Queries outside the lattice are clamped; clamped axes get
// zero spatial derivative.
struct EncodeStencil {
  std::size_t vidx[8];
  double w[8];
  Vec3 dw[8];
};

inline void encodeStencil(const FeatureGrid& g, const Vec3& p, EncodeStencil& st) {
  double fr[3];
  int c[3];
  bool clamped[3];
  const int n[3] = {g.nx, g.ny, g.nz};
  for (int a = 0; a < 3; ++a) {
    double local = (p[a] - g.origin[a]) / g.cell;
    clamped[a] = local <= 0.0 || local >= n[a];
    local = clampd(local, 0.0, static_cast<double>(n[a]));
    int ci = std::min(static_cast<int>(local), n[a] - 1);
    c[a] = ci;
    fr[a] = local - ci;
  }
  for (int m = 0; m < 8; ++m) {
    int bx = m & 1, by = (m >> 1) & 1, bz = (m >> 2) & 1;
    st.vidx[m] = g.vertexIndex(c[0] + bx, c[1] + by, c[2] + bz);
    double wx = bx ? fr[0] : 1.0 - fr[0];
    double wy = by ? fr[1] : 1.0 - fr[1];
    double wz = bz ? fr[2] : 1.0 - fr[2];
    st.w[m] = wx * wy * wz;
    double inv = 1.0 / g.cell;
    st.dw[m][0] = clamped[0] ? 0.0 : (bx ? 1.0 : -1.0) * wy * wz * inv;
    st.dw[m][1] = clamped[1] ? 0.0 : (by ? 1.0 : -1.0) * wx * wz * inv;
    st.dw[m][2] = clamped[2] ? 0.0 : (bz ? 1.0 : -1.0) * wx * wy * inv;
  }
}

// out[0..F) = trilinear blend of the 8 corner feature vectors.
inline void encodeFeature(const FeatureGrid& g, const double* feats,
                          const EncodeStencil& st, double* out) {
  for (int f = 0; f < g.F; ++f) out[f] = 0.0;
  for (int m = 0; m < 8; ++m) {
    const double* v = feats + st.vidx[m] * g.F;
    for (int f = 0; f < g.F; ++f) out[f] += st.w[m] * v[f];
  }
}

inline void encode(const FeatureGrid& g, const double* feats, const Vec3& p,
                   double* out) {
  EncodeStencil st;
  encodeStencil(g, p, st);
  encodeFeature(g, feats, st, out);
}

}  // namespace arecon
