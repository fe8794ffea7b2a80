#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>

#include "arecon/planning.hpp"
#include "arecon/scene_presets.hpp"

using namespace arecon;

namespace {

Aabb cube25() { return {Vec3(-2.5, -2.5, -2.5), Vec3(2.5, 2.5, 2.5)}; }

// all-zero parameters except a wired pass-through making s = z / 5
ImplicitField wiredField() {
  ImplicitField f(cube25(), 0.5, 8, 32, 7, 0.0);
  auto& p = f.mutableParams();
  for (auto& x : p) x = 0.0;
  const auto& l = f.layout();
  std::size_t base = f.grid().paramCount();
  p[base + l.offW1 + 0 + (f.grid().F + 2) * l.hidden] = 1.0;
  p[base + l.offW2 + 0] = 1.0;
  p[base + l.offWs + 0] = 1.0;
  p[base + l.offBs] = -0.5;
  return f;
}

CameraIntrinsics smallIntr(int w, int h) {
  return CameraIntrinsics::fromFov(w, h, 60.0 * kPi / 180.0,
                                   45.0 * kPi / 180.0, 0.05, 5.0);
}

UncertaintyVolume openVolume(const GridGeom& g, double occ) {
  UncertaintyVolume v(g);
  std::fill(v.occupancy.begin(), v.occupancy.end(), occ);
  return v;
}

GridGeom grid16() {
  GridGeom g;
  g.origin = Vec3(0, 0, 0);
  g.voxel = 0.12;
  g.nx = g.ny = g.nz = 16;
  return g;
}

// dividing wall at i in {7,8} with a risky low-y opening and a safe high-y one
RiskField corridorRisk(double shortcutRisk, bool sealOpenings = false) {
  RiskField rf(grid16());
  for (int k = 0; k < 16; ++k)
    for (int j = 0; j < 16; ++j)
      for (int i = 7; i <= 8; ++i) {
        double r = 1.0;
        if (!sealOpenings) {
          if (j >= 3 && j <= 4) r = shortcutRisk;
          if (j >= 11 && j <= 12) r = 0.0;
        }
        rf.risk[static_cast<size_t>(rf.geom.index(i, j, k))] = r;
      }
  return rf;
}

CandidateViewpoint goalAt(const Vec3& pos, const Vec3& look) {
  CandidateViewpoint c;
  c.pose = lookAt(pos, look);
  c.id = 0;
  return c;
}

// exhaustive 26-neighbour shortest path over voxel centers with the same
// per-edge cost rule the sampling planner uses
struct OracleRoute {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::int64_t> path;
};

OracleRoute gridDijkstra(const RiskField& rf, const Vec3& s, const Vec3& g,
                         const PlannerParams& p) {
  const GridGeom& gg = rf.geom;
  int si, sj, sk, gi, gj, gk;
  REQUIRE(gg.locate(s, si, sj, sk));
  REQUIRE(gg.locate(g, gi, gj, gk));
  std::int64_t src = gg.index(si, sj, sk), dst = gg.index(gi, gj, gk);
  std::vector<double> dist(static_cast<size_t>(gg.count()),
                           std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> parent(static_cast<size_t>(gg.count()), -1);
  using Entry = std::pair<double, std::int64_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
  dist[static_cast<size_t>(src)] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[static_cast<size_t>(u)] + 1e-15) continue;
    int i, j, k;
    gg.coords(u, i, j, k);
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (!di && !dj && !dk) continue;
          int a = i + di, b = j + dj, c = k + dk;
          if (!gg.inGrid(a, b, c)) continue;
          std::int64_t v = gg.index(a, b, c);
          auto e = detail::evalEdge(gg.center(u), gg.center(v), rf, nullptr, p);
          if (!e.valid) continue;
          double nd = dist[static_cast<size_t>(u)] + e.cost;
          if (nd < dist[static_cast<size_t>(v)] - 1e-15) {
            dist[static_cast<size_t>(v)] = nd;
            parent[static_cast<size_t>(v)] = u;
            pq.push({nd, v});
          }
        }
  }
  OracleRoute out;
  out.cost = dist[static_cast<size_t>(dst)];
  for (std::int64_t v = dst; v != -1; v = parent[static_cast<size_t>(v)])
    out.path.push_back(v);
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

// fine positions along a waypoint polyline, for route-class assertions
std::vector<Vec3> pathSamples(const std::vector<Vec3>& wps, double spacing) {
  std::vector<Vec3> out;
  for (size_t i = 0; i + 1 < wps.size(); ++i) {
    double len = (wps[i + 1] - wps[i]).norm();
    int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int s = 0; s <= n; ++s)
      out.push_back(wps[i] + (static_cast<double>(s) / n) * (wps[i + 1] - wps[i]));
  }
  if (out.empty() && !wps.empty()) out.push_back(wps[0]);
  return out;
}

}  // namespace

TEST_CASE("risk field pins solids, decays outward, and matches the dilation law") {
  ImplicitField f = wiredField();  // s = z / 5, solid below z = 0
  SplatMap map(cube25(), 0.12);
  GridGeom geom;
  geom.origin = Vec3(-1.2, -1.2, -1.2);
  geom.voxel = 0.12;
  geom.nx = 20;
  geom.ny = 20;
  geom.nz = 30;  // reaches z = 2.4 so the top layer is deep free space
  PlannerParams p;
  RiskField rf = buildRiskField(f, map, geom, 0.18, p);  // two dilation passes

  std::vector<double> base(static_cast<size_t>(geom.count()));
  for (std::int64_t i = 0; i < geom.count(); ++i) {
    double s = f.eval(geom.center(i)).s;
    base[static_cast<size_t>(i)] = s < 0.0 ? 1.0 : sigmoid(-s / p.sigmaRisk);
  }
  for (int k = 0; k < geom.nz; ++k)
    for (int j = 0; j < geom.ny; ++j)
      for (int i = 0; i < geom.nx; ++i) {
        double expect = 0.0;
        for (int dk = -2; dk <= 2; ++dk)
          for (int dj = -2; dj <= 2; ++dj)
            for (int di = -2; di <= 2; ++di) {
              int d = std::abs(di) + std::abs(dj) + std::abs(dk);
              if (d > 2 || !geom.inGrid(i + di, j + dj, k + dk)) continue;
              double decay = d == 0 ? 1.0 : (d == 1 ? p.riskDecay : p.riskDecay * p.riskDecay);
              expect = std::max(
                  expect, decay * base[static_cast<size_t>(geom.index(i + di, j + dj, k + dk))]);
            }
        double got = rf.risk[static_cast<size_t>(geom.index(i, j, k))];
        REQUIRE(got == Catch::Approx(expect).margin(1e-12));
        REQUIRE(got >= 0.0);
        REQUIRE(got <= 1.0);
      }

  // solid voxels stay exactly at one
  REQUIRE(rf.at(Vec3(0.0, 0.0, -0.5)) == 1.0);
  // deep free space is almost clean
  REQUIRE(rf.at(Vec3(0.0, 0.0, 2.3)) < 0.05);
  // the first free ring above the surface inherits at least decay * 1
  REQUIRE(rf.at(Vec3(0.06, 0.06, 0.06)) >= p.riskDecay - 1e-12);
}

TEST_CASE("splat density drives risk where the field is blind") {
  ImplicitField fresh(cube25(), 0.5, 8, 32, 3);  // untrained, positive sdf bias
  SplatMap map(cube25(), 0.12);
  Rng rng(5);
  for (int n = 0; n < 24; ++n) {
    GaussianPrimitive g;
    g.mu = Vec3(0.6, 0.0, 0.0) +
           Vec3(rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                rng.uniform(-0.04, 0.04));
    g.s = 0.1;
    g.alpha = 0.9;
    g.c = Vec3(0.5, 0.5, 0.5);
    map.insert(g);
  }
  map.rebuildIndex();
  GridGeom geom;
  geom.origin = Vec3(-0.84, -0.84, -0.84);
  geom.voxel = 0.12;
  geom.nx = geom.ny = geom.nz = 14;
  PlannerParams p;
  RiskField rf = buildRiskField(fresh, map, geom, 0.0, p);  // no dilation
  REQUIRE(rf.at(Vec3(0.6, 0.0, 0.0)) > 0.95);
  REQUIRE(rf.at(Vec3(-0.6, -0.6, -0.6)) < 0.3);
}

TEST_CASE("visibility covers the sampled wedge and respects occlusion") {
  GridGeom g;
  g.origin = Vec3(-1.2, -1.2, -1.2);
  g.voxel = 0.2;
  g.nx = g.ny = g.nz = 12;
  CameraIntrinsics intr = smallIntr(64, 48);
  Pose pose = lookAt(Vec3(-1.09, 0.013, 0.017), Vec3(1.0, 0.021, 0.031));
  PlannerParams p;
  p.rayBudgetX = 64;
  p.rayBudgetY = 48;
  double tanH = std::tan(30.0 * kPi / 180.0);
  double tanV = std::tan(22.5 * kPi / 180.0);
  double halfDiag = 0.5 * g.voxel * std::sqrt(3.0);
  auto sidePlanes = [&](const Vec3& pc, double& dx, double& dy) {
    dx = (std::abs(pc.x()) - pc.z() * tanH) / std::sqrt(1.0 + tanH * tanH);
    dy = (std::abs(pc.y()) - pc.z() * tanV) / std::sqrt(1.0 + tanV * tanV);
  };

  SECTION("empty volume yields the full frustum wedge") {
    UncertaintyVolume vol = openVolume(g, 0.0);
    auto vis = visibleVoxels(pose, vol, intr, p);
    REQUIRE(std::is_sorted(vis.begin(), vis.end()));
    REQUIRE(std::adjacent_find(vis.begin(), vis.end()) == vis.end());
    std::vector<char> inSet(static_cast<size_t>(g.count()), 0);
    for (auto idx : vis) inSet[static_cast<size_t>(idx)] = 1;
    int interior = 0;
    for (std::int64_t idx = 0; idx < g.count(); ++idx) {
      Vec3 pc = pose.worldToCam(g.center(idx));
      double dx, dy;
      sidePlanes(pc, dx, dy);
      if (pc.z() > 0.25 && dx <= -0.06 && dy <= -0.06) {
        ++interior;
        REQUIRE(inSet[static_cast<size_t>(idx)] == 1);
      }
    }
    REQUIRE(interior > 80);
    for (auto idx : vis) {
      Vec3 pc = pose.worldToCam(g.center(idx));
      double dx, dy;
      sidePlanes(pc, dx, dy);
      REQUIRE(dx <= halfDiag + 0.01);
      REQUIRE(dy <= halfDiag + 0.01);
      REQUIRE(pc.z() >= -(halfDiag + 0.21));
    }
  }

  SECTION("an occupied slab hides everything behind it") {
    UncertaintyVolume vol = openVolume(g, 0.0);
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        vol.occupancy[static_cast<size_t>(g.index(7, j, k))] = 1.0;
    auto vis = visibleVoxels(pose, vol, intr, p);
    bool hitWall = false;
    for (auto idx : vis) {
      int i, j, k;
      g.coords(idx, i, j, k);
      REQUIRE(i <= 7);
      if (i == 7) hitWall = true;
    }
    REQUIRE(hitWall);
    // the wedge in front of the wall is still seen
    for (std::int64_t idx = 0; idx < g.count(); ++idx) {
      int i, j, k;
      g.coords(idx, i, j, k);
      if (i >= 7) continue;
      Vec3 pc = pose.worldToCam(g.center(idx));
      double dx, dy;
      sidePlanes(pc, dx, dy);
      if (pc.z() > 0.25 && dx <= -0.06 && dy <= -0.06)
        REQUIRE(std::binary_search(vis.begin(), vis.end(), idx));
    }
  }

  SECTION("zero ray budget sees nothing") {
    UncertaintyVolume vol = openVolume(g, 0.0);
    PlannerParams zero = p;
    zero.rayBudgetX = 0;
    REQUIRE(visibleVoxels(pose, vol, intr, zero).empty());
  }

  SECTION("the far plane clips the wedge") {
    UncertaintyVolume vol = openVolume(g, 0.0);
    CameraIntrinsics shortIntr = CameraIntrinsics::fromFov(
        64, 48, 60.0 * kPi / 180.0, 45.0 * kPi / 180.0, 0.05, 1.0);
    auto vis = visibleVoxels(pose, vol, shortIntr, p);
    REQUIRE_FALSE(vis.empty());
    double diag = g.voxel * std::sqrt(3.0);
    for (auto idx : vis)
      REQUIRE((g.center(idx) - pose.position()).norm() <= 1.0 + diag + 1e-9);
  }
}

TEST_CASE("voxel weight and reward match the exhaustive oracle") {
  GridGeom g;
  g.origin = Vec3(-1, -1, -1);
  g.voxel = 0.25;
  g.nx = g.ny = g.nz = 8;
  UncertaintyVolume vol(g);
  Rng rng(99);
  for (std::int64_t i = 0; i < g.count(); ++i) {
    size_t s = static_cast<size_t>(i);
    vol.uFinal[s] = rng.uniform();
    vol.entropyImp[s] = rng.uniform(0.0, 0.3);
    vol.entropyExp[s] = rng.uniform(0.0, 0.4);
    vol.entropy[s] = vol.entropyImp[s] + vol.entropyExp[s];
    vol.occupancy[s] = rng.uniform();
  }
  PlannerParams p;
  p.alpha = 0.7;
  p.beta = 1.3;

  SECTION("weight substitutions") {
    PlannerParams z = p;
    z.alpha = z.beta = 0.0;
    REQUIRE(voxelWeight(vol, 11, z) == 0.0);
    UncertaintyVolume unit(g);
    unit.uFinal[5] = 1.0;
    unit.entropy[5] = std::log(2.0);
    PlannerParams ones = p;
    ones.alpha = ones.beta = 1.0;
    REQUIRE(voxelWeight(unit, 5, ones) ==
            Catch::Approx(1.0 + std::log(2.0)).margin(1e-15));
    for (std::int64_t i = 0; i < g.count(); ++i) {
      size_t s = static_cast<size_t>(i);
      REQUIRE(voxelWeight(vol, i, p) ==
              Catch::Approx(p.alpha * vol.uFinal[s] + p.beta * vol.entropy[s])
                  .margin(1e-12));
    }
  }

  SECTION("reward equals brute-force summation with a matching gain split") {
    std::vector<std::int64_t> visible;
    for (std::int64_t i = 0; i < g.count(); ++i)
      if (rng.uniform() < 0.35) visible.push_back(i);
    REQUIRE(visible.size() > 20);
    double gi = 0, ge = 0;
    double r = nbvReward(vol, visible, p, &gi, &ge);
    double rRef = 0, giRef = 0, geRef = 0;
    for (auto idx : visible) {
      size_t s = static_cast<size_t>(idx);
      double open = 1.0 - vol.occupancy[s];
      rRef += (p.alpha * vol.uFinal[s] + p.beta * vol.entropy[s]) * open;
      giRef += p.beta * vol.entropyImp[s] * open;
      geRef += p.beta * vol.entropyExp[s] * open;
    }
    REQUIRE(r == Catch::Approx(rRef).margin(1e-12));
    REQUIRE(gi == Catch::Approx(giRef).margin(1e-12));
    REQUIRE(ge == Catch::Approx(geRef).margin(1e-12));
    // with entropy = imp + exp the split covers the whole entropy term
    double entTerm = 0;
    for (auto idx : visible) {
      size_t s = static_cast<size_t>(idx);
      entTerm += p.beta * vol.entropy[s] * (1.0 - vol.occupancy[s]);
    }
    REQUIRE(gi + ge == Catch::Approx(entTerm).margin(1e-12));
  }

  SECTION("fully known scene earns nothing") {
    std::fill(vol.occupancy.begin(), vol.occupancy.end(), 1.0);
    std::vector<std::int64_t> all;
    for (std::int64_t i = 0; i < g.count(); ++i) all.push_back(i);
    REQUIRE(nbvReward(vol, all, p) == 0.0);
    REQUIRE(nbvReward(vol, {}, p) == 0.0);
  }

  SECTION("adding uncertainty at a visible voxel never decreases the reward") {
    std::fill(vol.occupancy.begin(), vol.occupancy.end(), 0.4);
    std::vector<std::int64_t> visible{3, 17, 101, 200};
    double r0 = nbvReward(vol, visible, p);
    vol.uFinal[17] += 0.5;
    double r1 = nbvReward(vol, visible, p);
    REQUIRE(r1 > r0);
    vol.entropy[101] += 0.25;
    REQUIRE(nbvReward(vol, visible, p) > r1);
  }
}

TEST_CASE("a candidate facing the unobserved hot region wins") {
  GridGeom g;
  g.origin = Vec3(-1.6, -0.8, -0.8);
  g.voxel = 0.2;
  g.nx = 16;
  g.ny = 8;
  g.nz = 8;
  UncertaintyVolume vol = openVolume(g, 0.2);
  for (std::int64_t i = 0; i < g.count(); ++i)
    vol.uFinal[static_cast<size_t>(i)] = g.center(i).x() > 0.8 ? 1.0 : 0.01;
  CameraIntrinsics intr = smallIntr(64, 48);
  PlannerParams p;
  std::vector<CandidateViewpoint> cands(2);
  cands[0].pose = lookAt(Vec3(-0.21, 0.03, 0.02), Vec3(1.5, 0.05, 0.03));
  cands[1].pose = lookAt(Vec3(-0.21, 0.03, 0.02), Vec3(-1.5, 0.05, 0.03));
  cands[0].id = 0;
  cands[1].id = 1;
  scoreCandidates(cands, vol, intr, p);
  REQUIRE(cands[0].visible.size() > 20);
  REQUIRE(cands[0].reward > 5.0 * cands[1].reward);

  // oracle: the strict wedge interior of the winning view bounds its reward
  double tanH = std::tan(30.0 * kPi / 180.0);
  double tanV = std::tan(22.5 * kPi / 180.0);
  double halfDiag = 0.5 * g.voxel * std::sqrt(3.0);
  double lower = 0, upper = 0;
  for (std::int64_t idx = 0; idx < g.count(); ++idx) {
    Vec3 pc = cands[0].pose.worldToCam(g.center(idx));
    double dx = (std::abs(pc.x()) - pc.z() * tanH) / std::sqrt(1 + tanH * tanH);
    double dy = (std::abs(pc.y()) - pc.z() * tanV) / std::sqrt(1 + tanV * tanV);
    double w = voxelWeight(vol, idx, p) * (1.0 - vol.occupancy[static_cast<size_t>(idx)]);
    if (pc.z() > 0.25 && dx <= -0.06 && dy <= -0.06) lower += w;
    if (pc.z() >= -(halfDiag + 0.21) && dx <= halfDiag + 0.01 && dy <= halfDiag + 0.01)
      upper += w;
  }
  REQUIRE(cands[0].reward >= lower - 1e-9);
  REQUIRE(cands[0].reward <= upper + 1e-9);
}

TEST_CASE("NBV selection obeys reward, distance and id tie-breaks") {
  auto mk = [](const Vec3& pos, double reward, bool feasible, double clearance) {
    CandidateViewpoint c;
    c.pose = lookAt(pos, pos + Vec3(1, 0, 0));
    c.reward = reward;
    c.feasible = feasible;
    c.clearance = clearance;
    return c;
  };

  SECTION("single candidate is returned") {
    std::vector<CandidateViewpoint> one{mk(Vec3(1, 0, 0), 0.3, true, 1.0)};
    NbvChoice ch = selectNbv(one, Vec3::Zero());
    REQUIRE(ch.index == 0);
    REQUIRE_FALSE(ch.degraded);
  }

  SECTION("equal rewards prefer the nearer candidate, then the lower index") {
    std::vector<CandidateViewpoint> two{mk(Vec3(1, 0, 0), 1.0, true, 1.0),
                                        mk(Vec3(0.5, 0, 0), 1.0, true, 1.0)};
    REQUIRE(selectNbv(two, Vec3::Zero()).index == 1);
    std::vector<CandidateViewpoint> sym{mk(Vec3(1, 0, 0), 1.0, true, 1.0),
                                        mk(Vec3(-1, 0, 0), 1.0, true, 1.0)};
    REQUIRE(selectNbv(sym, Vec3::Zero()).index == 0);
  }

  SECTION("random rewards equal brute-force argmax") {
    Rng rng(4242);
    std::vector<CandidateViewpoint> cands;
    for (int i = 0; i < 40; ++i)
      cands.push_back(mk(rng.uniformInBox(cube25()), rng.uniform(), true, 1.0));
    Vec3 cur(0.3, -0.2, 0.1);
    NbvChoice ch = selectNbv(cands, cur);
    int best = -1;
    double bestR = -1, bestD = 1e300;
    for (int i = 0; i < 40; ++i) {
      double d = (cands[static_cast<size_t>(i)].pose.position() - cur).norm();
      double r = cands[static_cast<size_t>(i)].reward;
      if (r > bestR || (r == bestR && d < bestD)) {
        bestR = r;
        bestD = d;
        best = i;
      }
    }
    REQUIRE(ch.index == best);

    // invariance under positive rescaling of every reward
    for (auto& c : cands) c.reward *= 3.7;
    REQUIRE(selectNbv(cands, cur).index == best);
  }

  SECTION("infeasible candidates are skipped; none feasible degrades") {
    std::vector<CandidateViewpoint> cands{mk(Vec3(1, 0, 0), 5.0, false, 0.2),
                                          mk(Vec3(2, 0, 0), 1.0, true, 0.9),
                                          mk(Vec3(3, 0, 0), 0.5, true, 0.4)};
    NbvChoice ch = selectNbv(cands, Vec3::Zero());
    REQUIRE(ch.index == 1);
    REQUIRE_FALSE(ch.degraded);
    for (auto& c : cands) c.feasible = false;
    ch = selectNbv(cands, Vec3::Zero());
    REQUIRE(ch.degraded);
    REQUIRE(ch.index == 1);  // highest clearance
  }

  SECTION("no candidates throws") {
    REQUIRE_THROWS_AS(selectNbv({}, Vec3::Zero()), std::invalid_argument);
  }
}

TEST_CASE("candidate sampling stays in free space and aims at the hot voxel") {
  SceneSpec scene = makeSphereRoom();
  GridGeom g = GridGeom::fromBounds(scene.bounds, 0.12);
  double halfDiag = 0.5 * g.voxel * std::sqrt(3.0);
  RiskField rf(g);
  for (std::int64_t i = 0; i < g.count(); ++i)
    rf.risk[static_cast<size_t>(i)] =
        gtSdf(scene, g.center(i)) < 0.18 + halfDiag ? 1.0 : 0.0;
  UncertaintyVolume vol = openVolume(g, 0.0);
  int hi, hj, hk;
  REQUIRE(g.locate(Vec3(0.3, 0.6, 1.0), hi, hj, hk));
  std::int64_t hot = g.index(hi, hj, hk);
  vol.uFinal[static_cast<size_t>(hot)] = 1.0;
  Vec3 aim = g.center(hot);

  PlannerParams p;
  p.candidateCount = 64;
  p.aimRange = 12.0;  // whole room in range
  auto cands = sampleCandidates(vol, rf, 11, p);
  REQUIRE(cands.size() == 64);
  for (size_t i = 0; i < cands.size(); ++i) {
    const CandidateViewpoint& c = cands[i];
    REQUIRE(c.id == static_cast<int>(i));
    REQUIRE(c.feasible);
    REQUIRE(g.bounds().contains(c.pose.position()));
    REQUIRE(gtSdf(scene, c.pose.position()) >= 0.18 - 1e-9);
    REQUIRE(c.pose.isOrthonormal(1e-9));
    REQUIRE(c.clearance == 1.0);  // binary risk, accepted points sit at zero
    Pose base = lookAt(c.pose.position(), aim);
    REQUIRE(opticalAxisAngle(base, c.pose) <= p.yawJitter + 1e-9);
  }

  SECTION("fixed seed reproduces the set bitwise; another seed does not") {
    auto again = sampleCandidates(vol, rf, 11, p);
    REQUIRE(again.size() == cands.size());
    for (size_t i = 0; i < cands.size(); ++i) {
      REQUIRE((again[i].pose.t - cands[i].pose.t).norm() == 0.0);
      REQUIRE((again[i].pose.R - cands[i].pose.R).cwiseAbs().maxCoeff() == 0.0);
    }
    auto other = sampleCandidates(vol, rf, 12, p);
    bool differs = false;
    for (size_t i = 0; i < cands.size(); ++i)
      if ((other[i].pose.t - cands[i].pose.t).norm() > 0) differs = true;
    REQUIRE(differs);
  }

  SECTION("no free space throws") {
    RiskField solid(g);
    std::fill(solid.risk.begin(), solid.risk.end(), 1.0);
    REQUIRE_THROWS_AS(sampleCandidates(vol, solid, 11, p), std::runtime_error);
  }
}

TEST_CASE("start equal to goal yields a single-waypoint plan") {
  RiskField rf(grid16());
  UncertaintyVolume vol = openVolume(grid16(), 0.0);
  PlannerParams p;
  Vec3 s(0.9, 0.9, 0.9);
  CandidateViewpoint goal = goalAt(s, s + Vec3(1, 0, 0));
  Pose start = lookAt(s, s + Vec3(0, 1, 0));
  PathPlan plan = planPath(start, goal, rf, vol, 5, p);
  REQUIRE(plan.success);
  REQUIRE(plan.waypoints.size() == 1);
  REQUIRE((plan.waypoints[0] - s).norm() == 0.0);
  REQUIRE(plan.travelCost == 0.0);
  REQUIRE(plan.totalCost == 0.0);
  REQUIRE(plan.treeSize == 1);
  REQUIRE((plan.poses[0].R - goal.pose.R).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((plan.poses[0].t - s).norm() == 0.0);
}

TEST_CASE("empty scene costs the straight line") {
  RiskField rf(grid16());
  UncertaintyVolume vol = openVolume(grid16(), 0.0);
  PlannerParams p;
  p.eta = 0.0;
  Vec3 s0(0.30, 0.30, 0.30), g0(1.62, 1.62, 1.62);
  Pose start = lookAt(s0, g0);
  CandidateViewpoint goal = goalAt(g0, g0 + Vec3(0, -1, 0));
  PathPlan plan = planPath(start, goal, rf, vol, 3, p);
  double straight = (g0 - s0).norm();
  REQUIRE(plan.success);
  REQUIRE(plan.travelCost >= straight - 1e-9);
  REQUIRE(plan.travelCost <= 1.05 * straight);
  REQUIRE((plan.waypoints.front() - s0).norm() == 0.0);
  REQUIRE((plan.waypoints.back() - g0).norm() <= 1e-12);
  double maxHop = std::max(p.rrtStep, p.rewireRadius) + 1e-9;
  for (size_t i = 0; i + 1 < plan.waypoints.size(); ++i)
    REQUIRE((plan.waypoints[i + 1] - plan.waypoints[i]).norm() <= maxHop);
  for (const Vec3& w : plan.waypoints) REQUIRE(rf.at(w) < p.riskThreshold);
  // orientations: look-at toward the goal's view target, goal pose at the end
  Vec3 viewTarget = g0 + goal.pose.forward();
  for (size_t i = 0; i + 1 < plan.waypoints.size(); ++i) {
    Vec3 dir = (viewTarget - plan.waypoints[i]).normalized();
    REQUIRE(plan.poses[i].forward().dot(dir) >= 1.0 - 1e-9);
  }
  REQUIRE((plan.poses.back().R - goal.pose.R).cwiseAbs().maxCoeff() == 0.0);
  for (size_t i = 1; i < plan.costTrace.size(); ++i)
    REQUIRE(plan.costTrace[i] <= plan.costTrace[i - 1] - 1e-15);
  // total = best goal cost plus at most the final hop onto the exact goal
  REQUIRE(plan.totalCost >= plan.costTrace.back() - 1e-9);
  REQUIRE(plan.totalCost <= plan.costTrace.back() + p.goalRadius + 1e-9);
}

TEST_CASE("lambda trades the risky shortcut for the safe detour") {
  RiskField rf = corridorRisk(0.45);
  UncertaintyVolume vol = openVolume(grid16(), 0.0);
  Vec3 sPos(0.30, 0.42, 0.90), gPos(1.62, 0.42, 0.90);
  Pose start = lookAt(sPos, gPos);
  CandidateViewpoint goal = goalAt(gPos, gPos + Vec3(1, 0, 0));

  PlannerParams pBig;
  pBig.eta = 0.0;
  pBig.lambda = 30.0;
  pBig.rrtIterations = 3000;
  pBig.goalRadius = 0.12;
  PathPlan planBig = planPath(start, goal, rf, vol, 17, pBig);
  REQUIRE(planBig.success);

  OracleRoute oracle = gridDijkstra(rf, sPos, gPos, pBig);
  REQUIRE(std::isfinite(oracle.cost));
  bool oracleCrossesSafe = false;
  for (auto idx : oracle.path) {
    int i, j, k;
    rf.geom.coords(idx, i, j, k);
    if (i >= 7 && i <= 8) {
      REQUIRE(j >= 11);  // the exhaustive optimum uses the safe opening
      oracleCrossesSafe = true;
    }
  }
  REQUIRE(oracleCrossesSafe);

  // waypoints are risk-clean and every edge passes the planner's sampling rule
  for (const Vec3& w : planBig.waypoints) REQUIRE(rf.at(w) < pBig.riskThreshold);
  for (size_t i = 0; i + 1 < planBig.waypoints.size(); ++i)
    REQUIRE(detail::evalEdge(planBig.waypoints[i], planBig.waypoints[i + 1], rf,
                             nullptr, pBig)
                .valid);
  bool plannerCrossed = false;
  for (const Vec3& q : pathSamples(planBig.waypoints, 0.02)) {
    if (q.x() > 0.84 && q.x() < 1.08) {
      REQUIRE(q.y() > 1.2);  // detour side
      plannerCrossed = true;
    }
  }
  REQUIRE(plannerCrossed);
  REQUIRE(planBig.totalCost <= 1.25 * oracle.cost);
  REQUIRE(planBig.totalCost >= 0.5 * oracle.cost);
  for (size_t i = 1; i < planBig.costTrace.size(); ++i)
    REQUIRE(planBig.costTrace[i] <= planBig.costTrace[i - 1] - 1e-15);

  SECTION("small lambda keeps the shortcut") {
    PlannerParams pSmall = pBig;
    pSmall.lambda = 0.3;
    PathPlan planSmall = planPath(start, goal, rf, vol, 17, pSmall);
    REQUIRE(planSmall.success);
    for (const Vec3& w : planSmall.waypoints)
      REQUIRE(rf.at(w) < pSmall.riskThreshold);
    bool crossed = false;
    for (const Vec3& q : pathSamples(planSmall.waypoints, 0.02)) {
      if (q.x() > 0.84 && q.x() < 1.08) {
        REQUIRE(q.y() < 0.9);
        crossed = true;
      }
    }
    REQUIRE(crossed);
    OracleRoute oracleSmall = gridDijkstra(rf, sPos, gPos, pSmall);
    for (auto idx : oracleSmall.path) {
      int i, j, k;
      rf.geom.coords(idx, i, j, k);
      if (i >= 7 && i <= 8) REQUIRE(j <= 4);
    }
    REQUIRE(planSmall.totalCost <= 1.25 * oracleSmall.cost);
  }

  SECTION("fixed seed reproduces the plan bitwise") {
    PathPlan again = planPath(start, goal, rf, vol, 17, pBig);
    REQUIRE(again.waypoints.size() == planBig.waypoints.size());
    for (size_t i = 0; i < again.waypoints.size(); ++i)
      REQUIRE((again.waypoints[i] - planBig.waypoints[i]).norm() == 0.0);
    REQUIRE(again.totalCost == planBig.totalCost);
    REQUIRE(again.costTrace == planBig.costTrace);
  }
}

TEST_CASE("a sealed wall reports failure with partial tree stats") {
  RiskField rf = corridorRisk(0.45, true);
  UncertaintyVolume vol = openVolume(grid16(), 0.0);
  Vec3 sPos(0.30, 0.42, 0.90), gPos(1.62, 0.42, 0.90);
  PlannerParams p;
  p.eta = 0.0;
  p.rrtIterations = 400;
  PathPlan plan = planPath(lookAt(sPos, gPos), goalAt(gPos, gPos + Vec3(1, 0, 0)),
                           rf, vol, 9, p);
  REQUIRE_FALSE(plan.success);
  REQUIRE(plan.waypoints.empty());
  REQUIRE(plan.costTrace.empty());
  REQUIRE(plan.treeSize > 1);
  REQUIRE(plan.bestGoalDistance > p.goalRadius);
}

TEST_CASE("waypoints clear the gt geometry when routing around the sphere") {
  SceneSpec scene = makeSphereRoom();
  GridGeom g = GridGeom::fromBounds(scene.bounds, 0.12);
  double halfDiag = 0.5 * g.voxel * std::sqrt(3.0);
  RiskField rf(g);
  for (std::int64_t i = 0; i < g.count(); ++i)
    rf.risk[static_cast<size_t>(i)] =
        gtSdf(scene, g.center(i)) < scene.agentRadius + halfDiag + 0.02 ? 1.0 : 0.0;
  UncertaintyVolume vol = openVolume(g, 0.0);

  Vec3 sPos(-0.5, 0.6, 1.0), gPos(2.6, 0.6, 1.0);  // straight line hits the sphere
  PlannerParams p;
  p.eta = 0.0;
  p.rrtIterations = 2500;
  PathPlan plan = planPath(lookAt(sPos, gPos), goalAt(gPos, Vec3(1.2, 0.6, 1.0)),
                           rf, vol, 23, p);
  REQUIRE(plan.success);
  double straight = (gPos - sPos).norm();
  REQUIRE(plan.travelCost >= straight);
  REQUIRE(plan.travelCost <= 1.5 * straight);
  for (const Vec3& w : plan.waypoints) {
    REQUIRE(rf.at(w) < p.riskThreshold);
    REQUIRE(gtSdf(scene, w) > scene.agentRadius);
  }
  // between waypoints the clearance may shrink by at most the corner the
  // half-voxel sampling rule can clip
  for (const Vec3& q : pathSamples(plan.waypoints, 0.03))
    REQUIRE(gtSdf(scene, q) > scene.agentRadius - 0.03);
}

TEST_CASE("trajectory csv and planner json round-trip") {
  std::vector<TrajectorySample> traj(2);
  traj[0].t = 0.0;
  traj[0].pose = lookAt(Vec3(0, 0, 0), Vec3(1, 0, 0));
  traj[1].t = 0.5;
  traj[1].pose = lookAt(Vec3(0.3, 0.1, -0.2), Vec3(1, 0.2, 0.1));
  const char* csvPath = "test_tmp_traj.csv";
  writeTrajectoryCsv(traj, csvPath);
  std::ifstream in(csvPath);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "t,x,y,z,qw,qx,qy,qz");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double t, x, y, z, qw, qx, qy, qz;
    REQUIRE((ss >> t >> x >> y >> z >> qw >> qx >> qy >> qz));
    const TrajectorySample& ref = traj[static_cast<size_t>(rows)];
    REQUIRE(t == Catch::Approx(ref.t).margin(1e-12));
    REQUIRE(x == Catch::Approx(ref.pose.t.x()).margin(1e-7));
    double qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    REQUIRE(qn == Catch::Approx(1.0).margin(1e-6));
    Eigen::Vector4d qRef = rotationToQuaternion(ref.pose.R);
    REQUIRE(qw == Catch::Approx(qRef[0]).margin(1e-7));
    ++rows;
  }
  REQUIRE(rows == 2);
  in.close();
  std::remove(csvPath);

  std::vector<CandidateViewpoint> cands(2);
  cands[0].id = 0;
  cands[0].reward = 1.5;
  cands[1].id = 1;
  cands[1].reward = 0.25;
  cands[1].feasible = false;
  NbvChoice choice;
  choice.index = 0;
  PathPlan plan;
  plan.success = true;
  plan.travelCost = 2.0;
  plan.totalCost = 2.5;
  plan.costTrace = {3.0, 2.5};
  plan.treeSize = 42;
  const char* jsonPath = "test_tmp_planner.json";
  writePlannerJson({plannerStepJson(cands, choice, plan)}, jsonPath);
  std::ifstream jin(jsonPath);
  REQUIRE(jin.good());
  nlohmann::json j = nlohmann::json::parse(jin);
  REQUIRE(j["steps"].size() == 1);
  REQUIRE(j["steps"][0]["chosen"] == 0);
  REQUIRE(j["steps"][0]["degraded"] == false);
  REQUIRE(j["steps"][0]["candidates"].size() == 2);
  REQUIRE(j["steps"][0]["candidates"][1]["feasible"] == false);
  REQUIRE(j["steps"][0]["path"]["success"] == true);
  REQUIRE(j["steps"][0]["path"]["tree_size"] == 42);
  REQUIRE(j["steps"][0]["path"]["cost_trace"].size() == 2);
  jin.close();
  std::remove(jsonPath);
}
