#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "arecon/math.hpp"

namespace arecon {

// Shared trunk (2 hidden ReLU layers) with three linear heads: sdf (1),
// color (3, pre-sigmoid), uncertainty (1, pre-softplus). Parameters live in
// one flat array; the layout below maps segments to matrices column-major.
struct MlpLayout {
  int in = 11;
  int hidden = 32;
  std::size_t offW1 = 0, offB1 = 0, offW2 = 0, offB2 = 0;
  std::size_t offWs = 0, offBs = 0, offWc = 0, offBc = 0, offWu = 0, offBu = 0;
  std::size_t total = 0;

  static MlpLayout make(int in, int hidden) {
    MlpLayout l;
    l.in = in;
    l.hidden = hidden;
    std::size_t o = 0;
    auto seg = [&o](std::size_t n) {
      std::size_t s = o;
      o += n;
      return s;
    };
    const std::size_t h = hidden;
    l.offW1 = seg(h * in);
    l.offB1 = seg(h);
    l.offW2 = seg(h * h);
    l.offB2 = seg(h);
    l.offWs = seg(h);
    l.offBs = seg(1);
    l.offWc = seg(3 * h);
    l.offBc = seg(3);
    l.offWu = seg(h);
    l.offBu = seg(1);
    l.total = o;
    return l;
  }
};

struct MlpCache {
  Eigen::VectorXd e, z1, h1, z2, h2;
  double s = 0;
  Vec3 cpre = Vec3::Zero();
  double upre = 0;
};

namespace detail {
using CMap = Eigen::Map<const Eigen::MatrixXd>;
using MMap = Eigen::Map<Eigen::MatrixXd>;
using CVMap = Eigen::Map<const Eigen::VectorXd>;
using VMap = Eigen::Map<Eigen::VectorXd>;
}  // namespace detail

inline void mlpForward(const MlpLayout& l, const double* p, const double* ein,
                       MlpCache& c) {
  using namespace detail;
  const int h = l.hidden, in = l.in;
  c.e = CVMap(ein, in);
  c.z1 = CMap(p + l.offW1, h, in) * c.e + CVMap(p + l.offB1, h);
  c.h1 = c.z1.cwiseMax(0.0);
  c.z2 = CMap(p + l.offW2, h, h) * c.h1 + CVMap(p + l.offB2, h);
  c.h2 = c.z2.cwiseMax(0.0);
  c.s = CVMap(p + l.offWs, h).dot(c.h2) + p[l.offBs];
  c.cpre = CMap(p + l.offWc, 3, h) * c.h2 + CVMap(p + l.offBc, 3);
  c.upre = CVMap(p + l.offWu, h).dot(c.h2) + p[l.offBu];
}

// Accumulates parameter gradients into `g` (same layout as params; may be
// null to skip) and, when `dIn` is non-null, writes dL/d(input).
inline void mlpBackward(const MlpLayout& l, const double* p, const MlpCache& c,
                        double ds, const Vec3& dcpre, double dupre, double* g,
                        double* dIn) {
  using namespace detail;
  const int h = l.hidden, in = l.in;
  Eigen::VectorXd dh2 = CVMap(p + l.offWs, h) * ds +
                        CMap(p + l.offWc, 3, h).transpose() * dcpre +
                        CVMap(p + l.offWu, h) * dupre;
  if (g) {
    VMap(g + l.offWs, h) += ds * c.h2;
    g[l.offBs] += ds;
    MMap(g + l.offWc, 3, h) += dcpre * c.h2.transpose();
    VMap(g + l.offBc, 3) += dcpre;
    VMap(g + l.offWu, h) += dupre * c.h2;
    g[l.offBu] += dupre;
  }
  Eigen::VectorXd dz2 =
      (c.z2.array() > 0.0).select(dh2, Eigen::VectorXd::Zero(h));
  Eigen::VectorXd dh1 = CMap(p + l.offW2, h, h).transpose() * dz2;
  Eigen::VectorXd dz1 =
      (c.z1.array() > 0.0).select(dh1, Eigen::VectorXd::Zero(h));
  if (g) {
    MMap(g + l.offW2, h, h) += dz2 * c.h1.transpose();
    VMap(g + l.offB2, h) += dz2;
    MMap(g + l.offW1, h, in) += dz1 * c.e.transpose();
    VMap(g + l.offB1, h) += dz1;
  }
  if (dIn) {
    VMap d(dIn, in);
    d = CMap(p + l.offW1, h, in).transpose() * dz1;
  }
}

// He-style init for the trunk, small heads; the sdf bias starts positive so
// untrained space reads as free.
inline void mlpInit(const MlpLayout& l, double* p, Rng& rng, double sdfBias) {
  auto fill = [&](std::size_t off, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) p[off + i] = stddev * rng.normal();
  };
  const int h = l.hidden, in = l.in;
  fill(l.offW1, static_cast<std::size_t>(h) * in, std::sqrt(2.0 / in));
  fill(l.offB1, h, 0.0);
  fill(l.offW2, static_cast<std::size_t>(h) * h, std::sqrt(2.0 / h));
  fill(l.offB2, h, 0.0);
  fill(l.offWs, h, 0.1 / std::sqrt(static_cast<double>(h)));
  p[l.offBs] = sdfBias;
  fill(l.offWc, 3 * h, 0.1 / std::sqrt(static_cast<double>(h)));
  fill(l.offBc, 3, 0.0);
  fill(l.offWu, h, 0.1 / std::sqrt(static_cast<double>(h)));
  p[l.offBu] = 0.0;
}

}  // namespace arecon
