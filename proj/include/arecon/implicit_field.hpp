#pragma once

#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "arecon/feature_grid.hpp"
#include "arecon/mlp.hpp"
#include "arecon/ray_batch.hpp"

namespace arecon {

struct ImplicitHyperparams {
  double truncation = 0.24;      // τ, scene units
  double depthTrunc = 8.0;       // D_trunc; depth beyond it is not trusted
  double lambdaRgb = 1.0;
  double lambdaDepth = 1.0;
  double lambdaSdf = 20.0;
  double lambdaUncert = 0.05;
  double learningRate = 5e-3;
  int samplesPerRay = 24;
  double invalidRayWeight = 0.1;

  void validate(double camFar) const {
    if (!(truncation > 0)) throw std::invalid_argument("truncation must be > 0");
    if (!(depthTrunc < camFar)) throw std::invalid_argument("depthTrunc must be < far");
    if (lambdaRgb < 0 || lambdaDepth < 0 || lambdaSdf < 0 || lambdaUncert < 0)
      throw std::invalid_argument("loss weights must be >= 0");
    if (samplesPerRay < 2) throw std::invalid_argument("samplesPerRay must be >= 2");
  }
};

struct FieldSample {
  double s = 0.0;
  Vec3 c = Vec3::Zero();
  double sigma2 = 0.0;
};

struct RenderedRay {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double sigma2 = 0.0;           // rendered variance Σ w_i σ²_i
  bool flagged = false;          // every sample far from any surface
  double bellSum = 0.0;
  std::vector<double> w;
};

struct LossReport {
  double rgb = 0, depth = 0, sdf = 0, uncert = 0, total = 0;
  int raysTotal = 0, raysValid = 0, flaggedRays = 0, sdfSampleCount = 0;
  int zeroValidWarnings = 0;
  bool aborted = false;
  std::string abortTerm;
};

constexpr double kBellEps = 1e-6;
constexpr double kSigma2Min = 1e-4;

// The implicit branch: trainable feature lattice + MLP heads for SDF, color
// and per-point variance, fit by volume rendering losses with hand-derived
// reverse-mode gradients. Parameters live in one flat vector
// [grid features | mlp], which also backs Adam state and checkpoints.
class ImplicitField {
 public:
  ImplicitField(const Aabb& bounds, double cellSize, int features = 8,
                int hidden = 32, std::uint64_t seed = 0, double sdfBias = 0.3)
      : grid_(FeatureGrid::fromBounds(bounds, cellSize, features)),
        mlp_(MlpLayout::make(features + 3, hidden)) {
    params_.assign(grid_.paramCount() + mlp_.total, 0.0);
    grad_.assign(params_.size(), 0.0);
    m_.assign(params_.size(), 0.0);
    v_.assign(params_.size(), 0.0);
    Rng rng(hashMix(seed ^ 0x9e3779b97f4a7c15ULL));
    for (std::size_t i = 0; i < grid_.paramCount(); ++i)
      params_[i] = 0.01 * rng.normal();
    mlpInit(mlp_, mlpParams(), rng, sdfBias);
  }

  const FeatureGrid& grid() const { return grid_; }
  const MlpLayout& layout() const { return mlp_; }
  std::size_t paramCount() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutableParams() { return params_; }
  const std::vector<double>& lastGrad() const { return grad_; }

  FieldSample eval(const Vec3& p) const {
    MlpCache cache;
    EncodeStencil st;
    forwardPoint(p, st, cache);
    return headSample(cache);
  }

  // SDF plus its analytic spatial gradient (chain through the trilinear
  // weights and the normalized-position channels).
  double sdfWithGrad(const Vec3& p, Vec3& dsdp) const {
    MlpCache cache;
    EncodeStencil st;
    forwardPoint(p, st, cache);
    std::vector<double> dIn(mlp_.in);
    mlpBackward(mlp_, mlpParams(), cache, 1.0, Vec3::Zero(), 0.0, nullptr,
                dIn.data());
    dsdp = Vec3::Zero();
    for (int m = 0; m < 8; ++m) {
      const double* feat = params_.data() + st.vidx[m] * grid_.F;
      for (int f = 0; f < grid_.F; ++f) dsdp += dIn[f] * feat[f] * st.dw[m];
    }
    Aabb b = grid_.bounds();
    Vec3 ext = b.extent();
    for (int a = 0; a < 3; ++a) {
      double gamma = (p[a] - b.min[a]) / ext[a];
      if (gamma > 0.0 && gamma < 1.0) dsdp[a] += dIn[grid_.F + a] / ext[a];
    }
    return cache.s;
  }

  RenderedRay renderRay(const Ray& ray, const ImplicitHyperparams& hp,
                        const Vec3& background = Vec3::Zero()) const {
    if (ray.z.empty()) throw std::invalid_argument("ray has no samples");
    const double tr = hp.truncation / 4.0;
    RenderedRay out;
    out.w.resize(ray.z.size(), 0.0);
    std::vector<FieldSample> fs(ray.z.size());
    double S = 0.0;
    for (std::size_t i = 0; i < ray.z.size(); ++i) {
      fs[i] = eval(ray.origin + ray.z[i] * ray.dir);
      double q = sigmoid(fs[i].s / tr);
      out.w[i] = q * (1.0 - q);
      S += out.w[i];
    }
    out.bellSum = S;
    if (S < kBellEps) {
      out.flagged = true;
      out.color = background;
      out.depth = ray.z.back();
      std::fill(out.w.begin(), out.w.end(), 0.0);
      return out;
    }
    for (std::size_t i = 0; i < ray.z.size(); ++i) {
      out.w[i] /= S;
      out.color += out.w[i] * fs[i].c;
      out.depth += out.w[i] * ray.z[i];
      out.sigma2 += out.w[i] * fs[i].sigma2;
    }
    return out;
  }

  LossReport losses(const RayBatch& batch, const ImplicitHyperparams& hp) {
    return computeLosses(batch, hp, false);
  }

  LossReport lossesWithGrad(const RayBatch& batch, const ImplicitHyperparams& hp) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
    return computeLosses(batch, hp, true);
  }

  // One Adam update. Non-finite loss terms or gradients abort the step and
  // name the offending term; parameters stay untouched in that case.
  LossReport trainStep(const RayBatch& batch, const ImplicitHyperparams& hp) {
    LossReport rep = lossesWithGrad(batch, hp);
    auto bad = [](double x) { return !std::isfinite(x); };
    if (bad(rep.rgb)) { rep.aborted = true; rep.abortTerm = "rgb"; }
    else if (bad(rep.depth)) { rep.aborted = true; rep.abortTerm = "depth"; }
    else if (bad(rep.sdf)) { rep.aborted = true; rep.abortTerm = "sdf"; }
    else if (bad(rep.uncert)) { rep.aborted = true; rep.abortTerm = "uncert"; }
    if (!rep.aborted) {
      for (double g : grad_)
        if (bad(g)) { rep.aborted = true; rep.abortTerm = "gradient"; break; }
    }
    if (rep.aborted) return rep;

    ++adamStep_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adamStep_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adamStep_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      double g = grad_[i];
      m_[i] = b1 * m_[i] + (1 - b1) * g;
      v_[i] = b2 * v_[i] + (1 - b2) * g * g;
      params_[i] -= hp.learningRate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
    return rep;
  }

  // Central-difference audit of dL_total/dθ on a seeded parameter subset that
  // spans the grid and every MLP segment. Returns the max relative error.
  double gradCheck(const RayBatch& batch, const ImplicitHyperparams& hp,
                   double epsilon, std::uint64_t seed, int minParams = 64) {
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be > 0");
    LossReport rep = lossesWithGrad(batch, hp);
    (void)rep;
    std::vector<double> analytic = grad_;

    Rng rng(hashMix(seed ^ 0xc2b2ae3d27d4eb4fULL));
    std::set<std::size_t> picks;
    // grid vertices actually touched by the batch
    std::vector<std::size_t> touched;
    for (const auto& ray : batch.rays)
      for (double z : ray.z) {
        EncodeStencil st;
        encodeStencil(grid_, ray.origin + z * ray.dir, st);
        for (int m = 0; m < 8; ++m) touched.push_back(st.vidx[m]);
      }
    const int perSegment =
        std::max(6, static_cast<int>((minParams + 10) / 11));
    for (int i = 0; i < perSegment && !touched.empty(); ++i) {
      std::size_t v = touched[static_cast<std::size_t>(
          rng.uniformInt(0, static_cast<std::int64_t>(touched.size()) - 1))];
      picks.insert(v * grid_.F +
                   static_cast<std::size_t>(rng.uniformInt(0, grid_.F - 1)));
    }
    const std::size_t base = grid_.paramCount();
    auto pickSeg = [&](std::size_t off, std::size_t n) {
      for (int i = 0; i < perSegment; ++i)
        picks.insert(base + off +
                     static_cast<std::size_t>(
                         rng.uniformInt(0, static_cast<std::int64_t>(n) - 1)));
    };
    const int h = mlp_.hidden, in = mlp_.in;
    pickSeg(mlp_.offW1, static_cast<std::size_t>(h) * in);
    pickSeg(mlp_.offB1, h);
    pickSeg(mlp_.offW2, static_cast<std::size_t>(h) * h);
    pickSeg(mlp_.offB2, h);
    pickSeg(mlp_.offWs, h);
    pickSeg(mlp_.offBs, 1);
    pickSeg(mlp_.offWc, 3 * h);
    pickSeg(mlp_.offBc, 3);
    pickSeg(mlp_.offWu, h);
    pickSeg(mlp_.offBu, 1);

    double maxRel = 0.0;
    for (std::size_t idx : picks) {
      double saved = params_[idx];
      params_[idx] = saved + epsilon;
      double lp = computeLosses(batch, hp, false).total;
      params_[idx] = saved - epsilon;
      double lm = computeLosses(batch, hp, false).total;
      params_[idx] = saved;
      double fd = (lp - lm) / (2 * epsilon);
      double a = analytic[idx];
      // the 1e-3 floor keeps cancellation noise on near-zero gradients from
      // masquerading as relative error
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      maxRel = std::max(maxRel, rel);
    }
    return maxRel;
  }

  // Inference checkpoint: magic+version, geometry, then float64 LE params.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    const char magic[8] = {'A', 'R', 'C', 'F', 'L', 'D', '0', '1'};
    out.write(magic, 8);
    double geo[4] = {grid_.origin.x(), grid_.origin.y(), grid_.origin.z(), grid_.cell};
    out.write(reinterpret_cast<const char*>(geo), sizeof(geo));
    std::int32_t dims[5] = {grid_.nx, grid_.ny, grid_.nz, grid_.F, mlp_.hidden};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::uint64_t n = params_.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(params_.data()), n * sizeof(double));
    if (!out) throw std::runtime_error("write failed: " + path);
  }

  static ImplicitField load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, "ARCFLD01", 8) != 0)
      throw std::runtime_error("bad field checkpoint magic");
    double geo[4];
    in.read(reinterpret_cast<char*>(geo), sizeof(geo));
    std::int32_t dims[5];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    Aabb b{Vec3(geo[0], geo[1], geo[2]),
           Vec3(geo[0] + geo[3] * dims[0], geo[1] + geo[3] * dims[1],
                geo[2] + geo[3] * dims[2])};
    ImplicitField f(b, geo[3], dims[3], dims[4]);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != f.params_.size())
      throw std::runtime_error("field checkpoint size mismatch");
    in.read(reinterpret_cast<char*>(f.params_.data()), n * sizeof(double));
    if (!in) throw std::runtime_error("truncated field checkpoint");
    return f;
  }

 private:
  const double* mlpParams() const { return params_.data() + grid_.paramCount(); }
  double* mlpParams() { return params_.data() + grid_.paramCount(); }

  void positionChannels(const Vec3& p, double* e) const {
    Aabb b = grid_.bounds();
    Vec3 ext = b.extent();
    for (int a = 0; a < 3; ++a)
      e[grid_.F + a] = clampd((p[a] - b.min[a]) / ext[a], 0.0, 1.0);
  }

  void forwardPoint(const Vec3& p, EncodeStencil& st, MlpCache& cache) const {
    std::vector<double> e(mlp_.in);
    encodeStencil(grid_, p, st);
    encodeFeature(grid_, params_.data(), st, e.data());
    positionChannels(p, e.data());
    mlpForward(mlp_, mlpParams(), e.data(), cache);
  }

  FieldSample headSample(const MlpCache& cache) const {
    FieldSample s;
    s.s = cache.s;
    s.c = Vec3(sigmoid(cache.cpre.x()), sigmoid(cache.cpre.y()),
               sigmoid(cache.cpre.z()));
    s.sigma2 = softplus(cache.upre) + kSigma2Min;
    return s;
  }

  // Forward (and optional reverse) pass over a batch. Flagged rays keep their
  // SDF supervision but contribute nothing to the rendered-quantity terms;
  // normalizers N, N_v, |M| depend only on the batch, not on field state.
  LossReport computeLosses(const RayBatch& batch, const ImplicitHyperparams& hp,
                           bool withGrad) {
    batch.validate();
    hp.validate(batch.far);
    const double tr = hp.truncation / 4.0;
    LossReport rep;
    rep.raysTotal = static_cast<int>(batch.rays.size());

    int nValid = 0, nBand = 0;
    for (const auto& ray : batch.rays) {
      bool valid = ray.depthValid && ray.gtDepth <= hp.depthTrunc;
      if (!valid) continue;
      ++nValid;
      for (double z : ray.z)
        if (std::abs(z - ray.gtDepth) < hp.truncation) ++nBand;
    }
    rep.raysValid = nValid;
    rep.sdfSampleCount = nBand;
    if (nValid == 0) ++rep.zeroValidWarnings;
    const double invN = 1.0 / rep.raysTotal;
    const double invNv = nValid > 0 ? 1.0 / nValid : 0.0;
    const double invM = nBand > 0 ? 1.0 / nBand : 0.0;

    std::vector<EncodeStencil> st;
    std::vector<MlpCache> caches;
    std::vector<FieldSample> fs;
    std::vector<double> bell, w;

    for (const auto& ray : batch.rays) {
      const std::size_t ns = ray.z.size();
      st.resize(ns);
      caches.resize(ns);
      fs.resize(ns);
      bell.assign(ns, 0.0);
      w.assign(ns, 0.0);
      double S = 0.0;
      for (std::size_t i = 0; i < ns; ++i) {
        forwardPoint(ray.origin + ray.z[i] * ray.dir, st[i], caches[i]);
        fs[i] = headSample(caches[i]);
        double q = sigmoid(fs[i].s / tr);
        bell[i] = q * (1.0 - q);
        S += bell[i];
      }
      const bool flagged = S < kBellEps;
      const bool valid = ray.depthValid && ray.gtDepth <= hp.depthTrunc;

      Vec3 chat = Vec3::Zero();
      double dhat = 0.0, s2hat = 0.0;
      if (!flagged) {
        for (std::size_t i = 0; i < ns; ++i) {
          w[i] = bell[i] / S;
          chat += w[i] * fs[i].c;
          dhat += w[i] * ray.z[i];
          s2hat += w[i] * fs[i].sigma2;
        }
      } else {
        ++rep.flaggedRays;
      }

      Vec3 dChat = Vec3::Zero();
      double dDhat = 0.0, dS2hat = 0.0;
      if (!flagged) {
        Vec3 cerr = chat - ray.gtColor;
        rep.rgb += ray.weight * cerr.squaredNorm() * invN;
        dChat = 2.0 * hp.lambdaRgb * ray.weight * invN * cerr;
        if (valid) {
          double derr = dhat - ray.gtDepth;
          rep.depth += derr * derr * invNv;
          rep.uncert += (derr * derr / (2.0 * s2hat) + 0.5 * std::log(s2hat)) * invNv;
          dDhat = 2.0 * hp.lambdaDepth * invNv * derr +
                  hp.lambdaUncert * invNv * derr / s2hat;
          dS2hat = hp.lambdaUncert * invNv *
                   (0.5 / s2hat - derr * derr / (2.0 * s2hat * s2hat));
        }
      }

      // SDF band supervision applies with or without a usable render.
      double sdfLocal = 0.0;
      if (withGrad || valid) {
        double dot = 0.0;
        std::vector<double> dLdw;
        if (withGrad && !flagged) {
          dLdw.resize(ns);
          for (std::size_t i = 0; i < ns; ++i) {
            dLdw[i] = dChat.dot(fs[i].c) + dDhat * ray.z[i] + dS2hat * fs[i].sigma2;
            dot += w[i] * dLdw[i];
          }
        }
        for (std::size_t i = 0; i < ns; ++i) {
          double ds = 0.0;
          Vec3 dcpre = Vec3::Zero();
          double dupre = 0.0;
          if (valid && std::abs(ray.z[i] - ray.gtDepth) < hp.truncation) {
            double serr = fs[i].s - (ray.gtDepth - ray.z[i]);
            sdfLocal += serr * serr * invM;
            ds += 2.0 * hp.lambdaSdf * invM * serr;
          }
          if (withGrad && !flagged) {
            double dBell = (dLdw[i] - dot) / S;
            double q = sigmoid(fs[i].s / tr);
            ds += dBell * q * (1.0 - q) * (1.0 - 2.0 * q) / tr;
            Vec3 dc = w[i] * dChat;
            for (int ch = 0; ch < 3; ++ch)
              dcpre[ch] = dc[ch] * fs[i].c[ch] * (1.0 - fs[i].c[ch]);
            dupre = w[i] * dS2hat * softplusGrad(caches[i].upre);
          }
          if (withGrad && (ds != 0.0 || dupre != 0.0 || dcpre.squaredNorm() != 0.0)) {
            std::vector<double> dIn(mlp_.in);
            mlpBackward(mlp_, mlpParams(), caches[i], ds, dcpre, dupre,
                        grad_.data() + grid_.paramCount(), dIn.data());
            for (int m = 0; m < 8; ++m) {
              double* gf = grad_.data() + st[i].vidx[m] * grid_.F;
              for (int f = 0; f < grid_.F; ++f) gf[f] += st[i].w[m] * dIn[f];
            }
          }
        }
      }
      rep.sdf += sdfLocal;
    }

    rep.total = hp.lambdaRgb * rep.rgb + hp.lambdaDepth * rep.depth +
                hp.lambdaSdf * rep.sdf + hp.lambdaUncert * rep.uncert;
    return rep;
  }

  FeatureGrid grid_;
  MlpLayout mlp_;
  std::vector<double> params_, grad_, m_, v_;
  std::int64_t adamStep_ = 0;
};

}  // namespace arecon
