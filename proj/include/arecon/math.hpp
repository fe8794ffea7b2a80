#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace arecon {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

// Axis-aligned box in world units.
struct Aabb {
  Vec3 min{Vec3::Zero()};
  Vec3 max{Vec3::Zero()};

  Vec3 extent() const { return max - min; }
  double maxExtent() const { return extent().maxCoeff(); }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 clamp(const Vec3& p) const {
    return p.cwiseMax(min).cwiseMin(max);
  }
  bool valid() const { return (extent().array() > 0.0).all(); }
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x), stable at both tails.
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplusGrad(double x) { return sigmoid(x); }

// Shannon entropy of a Bernoulli(p) in nats, with H(0)=H(1)=0.
inline double binaryEntropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

inline double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

inline double sqr(double v) { return v * v; }

// splitmix64; used to derive independent substream seeds.
inline std::uint64_t hashMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hashCombine(std::uint64_t a, std::uint64_t b) {
  return hashMix(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Deterministic RNG wrapper. Every consumer owns its stream; no globals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }
  std::int64_t uniformInt(std::int64_t lo, std::int64_t hi) {  // inclusive
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(engine_);
  }
  Vec3 uniformInBox(const Aabb& b) {
    return Vec3(uniform(b.min.x(), b.max.x()), uniform(b.min.y(), b.max.y()),
                uniform(b.min.z(), b.max.z()));
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Lattice value noise in [0,1]; deterministic in the point and channel.
inline double valueNoise(const Vec3& p, std::uint64_t channel) {
  auto lattice = [channel](std::int64_t x, std::int64_t y, std::int64_t z) {
    std::uint64_t h = hashCombine(channel, static_cast<std::uint64_t>(x) * 0x8da6b343ULL);
    h = hashCombine(h, static_cast<std::uint64_t>(y) * 0xd8163841ULL);
    h = hashCombine(h, static_cast<std::uint64_t>(z) * 0xcb1ab31fULL);
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
  };
  Vec3 f(std::floor(p.x()), std::floor(p.y()), std::floor(p.z()));
  std::int64_t ix = static_cast<std::int64_t>(f.x());
  std::int64_t iy = static_cast<std::int64_t>(f.y());
  std::int64_t iz = static_cast<std::int64_t>(f.z());
  Vec3 u = p - f;
  // smoothstep fade
  Vec3 w(u.x() * u.x() * (3 - 2 * u.x()), u.y() * u.y() * (3 - 2 * u.y()),
         u.z() * u.z() * (3 - 2 * u.z()));
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        double wgt = (dx ? w.x() : 1 - w.x()) * (dy ? w.y() : 1 - w.y()) *
                     (dz ? w.z() : 1 - w.z());
        acc += wgt * lattice(ix + dx, iy + dy, iz + dz);
      }
  return acc;
}

}  // namespace arecon
