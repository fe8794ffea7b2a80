#pragma once

// Next-best-view selection and risk-aware motion planning on top of the fused
// uncertainty volume. Candidates are scored by expected hybrid information
// gain over the voxels their frustum can actually see; paths between views
// come from an RRT* whose edge cost trades length against integrated risk and
// a small credit for informative flythroughs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arecon/camera.hpp"
#include "arecon/grid3.hpp"
#include "arecon/implicit_field.hpp"
#include "arecon/math.hpp"
#include "arecon/pose.hpp"
#include "arecon/splat_map.hpp"
#include "arecon/uncertainty.hpp"

namespace arecon {

struct PlannerParams {
  double alpha = 1.0;  // weight on fused uncertainty in the voxel gain
  double beta = 1.0;   // weight on hybrid entropy in the voxel gain
  double eta = 0.05;   // reward credit collected along path edges
  double lambda = 2.0; // risk penalty along path edges
  int candidateCount = 64;
  int rayBudgetX = 32;
  int rayBudgetY = 24;
  double occThreshold = 0.5;  // occupancy that terminates a visibility ray
  double aimRange = 6.0;      // candidates aim at the hottest voxel within this radius
  double yawJitter = 0.15;    // radians, about the camera up axis
  int rrtIterations = 800;
  double rrtStep = 0.35;
  double goalRadius = 0.15;
  double rewireRadius = 0.7;
  double goalBias = 0.1;
  double riskThreshold = 0.5;
  double clearanceMargin = 0.18;  // agent radius for candidate clearance checks
  double sigmaRisk = 0.08;
  double riskDecay = 0.6;  // per-ring falloff when dilating risk by the agent radius

  void validate() const {
    if (alpha < 0 || beta < 0 || eta < 0 || lambda < 0)
      throw std::invalid_argument("planner gain/cost weights must be nonnegative");
    if (candidateCount < 1) throw std::invalid_argument("candidateCount < 1");
    if (rayBudgetX < 0 || rayBudgetY < 0)
      throw std::invalid_argument("negative ray budget");
    if (occThreshold <= 0.0 || occThreshold > 1.0)
      throw std::invalid_argument("occThreshold outside (0,1]");
    if (aimRange <= 0.0) throw std::invalid_argument("aimRange <= 0");
    if (rrtIterations < 1) throw std::invalid_argument("rrtIterations < 1");
    if (rrtStep <= 0.0 || goalRadius <= 0.0 || rewireRadius <= 0.0)
      throw std::invalid_argument("RRT* radii must be positive");
    if (goalBias < 0.0 || goalBias >= 1.0)
      throw std::invalid_argument("goalBias outside [0,1)");
    if (riskThreshold <= 0.0 || riskThreshold > 1.0)
      throw std::invalid_argument("riskThreshold outside (0,1]");
    if (clearanceMargin < 0.0) throw std::invalid_argument("negative clearanceMargin");
    if (sigmaRisk <= 0.0) throw std::invalid_argument("sigmaRisk <= 0");
    if (riskDecay < 0.0 || riskDecay >= 1.0)
      throw std::invalid_argument("riskDecay outside [0,1)");
  }
};

// Scalar risk in [0,1] per voxel. Queries outside the lattice count as unsafe.
struct RiskField {
  GridGeom geom;
  std::vector<double> risk;

  explicit RiskField(const GridGeom& g)
      : geom(g), risk(static_cast<size_t>(g.count()), 0.0) {}

  double at(const Vec3& p) const {
    int i, j, k;
    if (!geom.locate(p, i, j, k)) return 1.0;
    return risk[static_cast<size_t>(geom.index(i, j, k))];
  }
};

struct CandidateViewpoint {
  Pose pose;
  double reward = 0.0;
  double gainImp = 0.0;  // entropy-source split of the reward, diagnostics only
  double gainExp = 0.0;
  double clearance = 0.0;  // 1 - worst risk within the clearance margin
  std::vector<std::int64_t> visible;
  bool feasible = true;
  int id = -1;
};

// risk = max(splat occupancy, sigmoid(-s/sigma)), pinned to 1 wherever the
// field reports the inside of a solid, then dilated so the agent's body
// inherits danger from nearby voxels.
inline RiskField buildRiskField(const ImplicitField& field, const SplatMap& map,
                                const GridGeom& geom, double agentRadius,
                                const PlannerParams& p) {
  p.validate();
  RiskField rf(geom);
  std::vector<double> rho = densityLayer(map, geom);
  for (std::int64_t i = 0; i < geom.count(); ++i) {
    double s = field.eval(geom.center(i)).s;
    double pG = 1.0 - std::exp(-rho[static_cast<size_t>(i)]);
    rf.risk[static_cast<size_t>(i)] =
        s < 0.0 ? 1.0 : std::max(pG, sigmoid(-s / p.sigmaRisk));
  }
  int passes = static_cast<int>(std::ceil(agentRadius / geom.voxel - 1e-9));
  std::vector<double> next(rf.risk.size());
  for (int pass = 0; pass < passes; ++pass) {
    for (int k = 0; k < geom.nz; ++k)
      for (int j = 0; j < geom.ny; ++j)
        for (int i = 0; i < geom.nx; ++i) {
          size_t idx = static_cast<size_t>(geom.index(i, j, k));
          double m = rf.risk[idx];
          auto take = [&](int a, int b, int c) {
            if (a < 0 || a >= geom.nx || b < 0 || b >= geom.ny || c < 0 ||
                c >= geom.nz)
              return;
            m = std::max(m, p.riskDecay *
                                rf.risk[static_cast<size_t>(geom.index(a, b, c))]);
          };
          take(i - 1, j, k);
          take(i + 1, j, k);
          take(i, j - 1, k);
          take(i, j + 1, k);
          take(i, j, k - 1);
          take(i, j, k + 1);
          next[idx] = m;
        }
    rf.risk.swap(next);
  }
  return rf;
}

// Voxels a camera at `pose` would observe: a lattice of rayBudgetX x rayBudgetY
// rays through the image, each walked front to back until the first voxel whose
// occupancy exceeds the threshold (that voxel is still included) or the far
// plane. Returned indices are sorted and unique.
inline std::vector<std::int64_t> visibleVoxels(const Pose& pose,
                                               const UncertaintyVolume& vol,
                                               const CameraIntrinsics& intr,
                                               const PlannerParams& p) {
  std::vector<std::int64_t> out;
  if (p.rayBudgetX <= 0 || p.rayBudgetY <= 0) return out;
  std::vector<char> seen(vol.occupancy.size(), 0);
  Vec3 origin = pose.position();
  for (int jy = 0; jy < p.rayBudgetY; ++jy) {
    double v = (jy + 0.5) * intr.height / p.rayBudgetY;
    for (int ix = 0; ix < p.rayBudgetX; ++ix) {
      double u = (ix + 0.5) * intr.width / p.rayBudgetX;
      Vec3 dir = pose.dirToWorld(intr.rayDirAt(u, v));
      traverseVoxels(vol.geom, origin, dir, intr.far,
                     [&](int i, int j, int k, double) {
                       std::int64_t idx = vol.geom.index(i, j, k);
                       if (!seen[static_cast<size_t>(idx)]) {
                         seen[static_cast<size_t>(idx)] = 1;
                         out.push_back(idx);
                       }
                       return vol.occupancy[static_cast<size_t>(idx)] <=
                              p.occThreshold;
                     });
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double voxelWeight(const UncertaintyVolume& vol, std::int64_t idx,
                          const PlannerParams& p) {
  return p.alpha * vol.uFinal[static_cast<size_t>(idx)] +
         p.beta * vol.entropy[static_cast<size_t>(idx)];
}

// Expected gain of a view: sum of voxel weights discounted by how occupied the
// voxel already looks. The optional outputs split the entropy part of the sum
// by source for diagnostics.
inline double nbvReward(const UncertaintyVolume& vol,
                        const std::vector<std::int64_t>& visible,
                        const PlannerParams& p, double* gainImp = nullptr,
                        double* gainExp = nullptr) {
  double r = 0.0, gi = 0.0, ge = 0.0;
  for (std::int64_t idx : visible) {
    size_t s = static_cast<size_t>(idx);
    double open = 1.0 - vol.occupancy[s];
    r += voxelWeight(vol, idx, p) * open;
    gi += p.beta * vol.entropyImp[s] * open;
    ge += p.beta * vol.entropyExp[s] * open;
  }
  if (gainImp) *gainImp = gi;
  if (gainExp) *gainExp = ge;
  return r;
}

inline void scoreCandidates(std::vector<CandidateViewpoint>& cands,
                            const UncertaintyVolume& vol,
                            const CameraIntrinsics& intr,
                            const PlannerParams& p) {
  for (auto& c : cands) {
    c.visible = visibleVoxels(c.pose, vol, intr, p);
    c.reward = nbvReward(vol, c.visible, p, &c.gainImp, &c.gainExp);
  }
}

// Rejection-samples candidate positions in free space (risk below threshold at
// the position and one clearance margin along each axis), aimed at the highest
// fused-uncertainty voxel within range plus a small yaw jitter. Throws when
// acceptable space is so scarce that the attempt budget runs out.
inline std::vector<CandidateViewpoint> sampleCandidates(
    const UncertaintyVolume& vol, const RiskField& risk, std::uint64_t seed,
    const PlannerParams& p) {
  p.validate();
  Rng rng(seed);
  Aabb box = risk.geom.bounds();
  std::vector<CandidateViewpoint> out;
  out.reserve(static_cast<size_t>(p.candidateCount));
  auto worstNearby = [&](const Vec3& q) {
    double w = risk.at(q);
    for (int a = 0; a < 3; ++a)
      for (int sgn : {-1, 1}) {
        Vec3 o = q;
        o[a] += sgn * p.clearanceMargin;
        w = std::max(w, risk.at(o));
      }
    return w;
  };
  std::int64_t attempts = 0;
  const std::int64_t maxAttempts = 200ll * p.candidateCount;
  while (static_cast<int>(out.size()) < p.candidateCount) {
    if (attempts++ >= maxAttempts)
      throw std::runtime_error("candidate sampling exhausted: free space too scarce");
    Vec3 pos = rng.uniformInBox(box);
    double w = worstNearby(pos);
    if (w >= p.riskThreshold) continue;
    std::int64_t best = -1;
    double bestU = -1.0;
    for (std::int64_t i = 0; i < vol.count(); ++i) {
      if (vol.uFinal[static_cast<size_t>(i)] <= bestU) continue;
      if ((vol.geom.center(i) - pos).norm() > p.aimRange) continue;
      bestU = vol.uFinal[static_cast<size_t>(i)];
      best = i;
    }
    Vec3 target = best >= 0 ? vol.geom.center(best) : box.center();
    Pose pose = lookAt(pos, target);
    double th = rng.uniform(-p.yawJitter, p.yawJitter);
    Mat3 yaw;
    yaw << std::cos(th), 0, std::sin(th), 0, 1, 0, -std::sin(th), 0, std::cos(th);
    pose.R = pose.R * yaw;
    CandidateViewpoint c;
    c.pose = pose;
    c.clearance = 1.0 - w;
    c.id = static_cast<int>(out.size());
    out.push_back(std::move(c));
  }
  return out;
}

struct NbvChoice {
  int index = -1;
  bool degraded = false;  // no feasible candidate; fell back on clearance
};

// Highest reward among feasible candidates; ties prefer the one closer to the
// current position, then the earlier id. With nothing feasible the choice
// degrades to the candidate with the most clearance.
inline NbvChoice selectNbv(const std::vector<CandidateViewpoint>& cands,
                           const Vec3& currentPosition) {
  if (cands.empty()) throw std::invalid_argument("selectNbv: no candidates");
  NbvChoice choice;
  double bestR = -std::numeric_limits<double>::infinity();
  double bestD = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cands.size(); ++i) {
    const CandidateViewpoint& c = cands[i];
    if (!c.feasible) continue;
    double d = (c.pose.position() - currentPosition).norm();
    if (c.reward > bestR || (c.reward == bestR && d < bestD)) {
      bestR = c.reward;
      bestD = d;
      choice.index = static_cast<int>(i);
    }
  }
  if (choice.index >= 0) return choice;
  choice.degraded = true;
  double bestC = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cands.size(); ++i)
    if (cands[i].clearance > bestC) {
      bestC = cands[i].clearance;
      choice.index = static_cast<int>(i);
    }
  return choice;
}

struct PathPlan {
  std::vector<Vec3> waypoints;
  std::vector<Pose> poses;  // one orientation per waypoint
  double travelCost = 0.0;  // summed edge lengths
  double riskCost = 0.0;    // lambda-weighted mean-risk sum over edges
  double rewardTerm = 0.0;  // eta-weighted reward credit over edges
  double totalCost = 0.0;   // summed (floored) edge costs
  bool success = false;
  int treeSize = 0;
  double bestGoalDistance = std::numeric_limits<double>::infinity();
  std::vector<double> costTrace;  // best goal cost after each improvement
};

namespace detail {

inline double rewardDensity(const UncertaintyVolume& vol, const Vec3& q,
                            const PlannerParams& p) {
  int i, j, k;
  if (!vol.geom.locate(q, i, j, k)) return 0.0;
  std::int64_t idx = vol.geom.index(i, j, k);
  return voxelWeight(vol, idx, p) *
         (1.0 - vol.occupancy[static_cast<size_t>(idx)]);
}

struct EdgeEval {
  bool valid = false;
  double length = 0.0;
  double risk = 0.0;    // lambda * mean risk along the edge
  double reward = 0.0;  // eta * mean reward density at coarse samples
  double cost = 0.0;
};

// Risk is sampled every half voxel; any sample at or above the threshold
// invalidates the edge. The reward credit uses coarser two-voxel spacing.
// Cost keeps a small positive floor so the tree cannot profit from cycles.
inline EdgeEval evalEdge(const Vec3& a, const Vec3& b, const RiskField& risk,
                         const UncertaintyVolume* vol, const PlannerParams& p) {
  EdgeEval e;
  e.length = (b - a).norm();
  double spacing = 0.5 * risk.geom.voxel;
  int n = std::max(1, static_cast<int>(std::ceil(e.length / spacing)));
  double riskSum = 0.0;
  for (int s = 1; s <= n; ++s) {
    Vec3 q = a + (static_cast<double>(s) / n) * (b - a);
    double r = risk.at(q);
    if (r >= p.riskThreshold) return e;
    riskSum += r;
  }
  double meanReward = 0.0;
  if (vol && p.eta > 0.0) {
    int m = std::max(1, static_cast<int>(std::ceil(e.length / (2.0 * risk.geom.voxel))));
    for (int s = 1; s <= m; ++s)
      meanReward += rewardDensity(*vol, a + (static_cast<double>(s) / m) * (b - a), p);
    meanReward /= m;
  }
  e.risk = p.lambda * (riskSum / n);
  e.reward = p.eta * meanReward;
  e.valid = true;
  e.cost = std::max(e.length + e.risk - e.reward, 0.01 * e.length);
  return e;
}

}  // namespace detail

// RRT* over positions inside the risk lattice. The tree is seeded with the
// straight segment toward the goal as far as it stays clear, then grown with
// goal-biased uniform samples, choose-parent and rewire within the rewire
// radius. Waypoint orientations all look at the goal view's aim point; the
// final waypoint adopts the goal pose exactly when the last hop connects.
inline PathPlan planPath(const Pose& start, const CandidateViewpoint& goal,
                         const RiskField& risk, const UncertaintyVolume& vol,
                         std::uint64_t seed, const PlannerParams& p) {
  p.validate();
  requireValidPose(start);
  requireValidPose(goal.pose);
  PathPlan plan;
  const Vec3 s0 = start.position();
  const Vec3 g0 = goal.pose.position();
  const Vec3 viewTarget = g0 + goal.pose.forward();
  auto orient = [&](const Vec3& w) { return lookAt(w, viewTarget); };

  if ((g0 - s0).norm() <= p.goalRadius) {
    plan.waypoints = {s0};
    Pose pose = goal.pose;
    pose.t = s0;
    plan.poses = {pose};
    plan.success = true;
    plan.treeSize = 1;
    plan.bestGoalDistance = (g0 - s0).norm();
    return plan;
  }

  struct Node {
    Vec3 p;
    int parent;
    double cost;      // accumulated from the root
    double edgeCost;  // cost of the edge from the parent
  };
  std::vector<Node> nodes;
  nodes.push_back({s0, -1, 0.0, 0.0});

  double bestGoalCost = std::numeric_limits<double>::infinity();
  int bestGoalNode = -1;
  auto updateGoal = [&]() {
    for (size_t i = 0; i < nodes.size(); ++i) {
      double d = (nodes[i].p - g0).norm();
      plan.bestGoalDistance = std::min(plan.bestGoalDistance, d);
      if (d > p.goalRadius) continue;
      if (nodes[i].cost < bestGoalCost - 1e-15) {
        bestGoalCost = nodes[i].cost;
        bestGoalNode = static_cast<int>(i);
        plan.costTrace.push_back(bestGoalCost);
      }
    }
  };

  {  // straight-shot seeding: walk toward the goal while the segment is clear
    Vec3 d = g0 - s0;
    double L = d.norm();
    int hops = std::max(1, static_cast<int>(std::ceil(L / p.rrtStep)));
    int prev = 0;
    for (int h = 1; h <= hops; ++h) {
      Vec3 q = s0 + (static_cast<double>(h) / hops) * d;
      detail::EdgeEval e = detail::evalEdge(nodes[prev].p, q, risk, &vol, p);
      if (!e.valid) break;
      nodes.push_back({q, prev, nodes[prev].cost + e.cost, e.cost});
      prev = static_cast<int>(nodes.size()) - 1;
    }
    updateGoal();
  }

  Rng rng(seed);
  Aabb box = risk.geom.bounds();
  for (int it = 0; it < p.rrtIterations; ++it) {
    double pick = rng.uniform();
    Vec3 sample = pick < p.goalBias ? g0 : rng.uniformInBox(box);
    int nearest = 0;
    double nd = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i) {
      double d = (nodes[i].p - sample).norm();
      if (d < nd) {
        nd = d;
        nearest = static_cast<int>(i);
      }
    }
    if (nd < 1e-9) continue;
    Vec3 q = nd <= p.rrtStep ? sample
                             : nodes[nearest].p + (p.rrtStep / nd) * (sample - nodes[nearest].p);
    if (risk.at(q) >= p.riskThreshold) continue;

    int parent = -1;
    double cbest = std::numeric_limits<double>::infinity();
    double ebest = 0.0;
    auto tryParent = [&](int i) {
      detail::EdgeEval e = detail::evalEdge(nodes[i].p, q, risk, &vol, p);
      if (!e.valid) return;
      double c = nodes[i].cost + e.cost;
      if (c < cbest) {
        cbest = c;
        parent = i;
        ebest = e.cost;
      }
    };
    tryParent(nearest);
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (static_cast<int>(i) == nearest) continue;
      if ((nodes[i].p - q).norm() > p.rewireRadius) continue;
      tryParent(static_cast<int>(i));
    }
    if (parent < 0) continue;
    int newIdx = static_cast<int>(nodes.size());
    nodes.push_back({q, parent, cbest, ebest});

    bool rewired = false;
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
      if ((nodes[i].p - q).norm() > p.rewireRadius) continue;
      detail::EdgeEval e = detail::evalEdge(q, nodes[i].p, risk, &vol, p);
      if (!e.valid) continue;
      double c = cbest + e.cost;
      if (c + 1e-12 < nodes[i].cost) {
        nodes[i].parent = newIdx;
        nodes[i].cost = c;
        nodes[i].edgeCost = e.cost;
        rewired = true;
      }
    }
    if (rewired) {
      // refresh accumulated costs root-first (parents may be newer than children)
      std::vector<std::vector<int>> children(nodes.size());
      for (size_t i = 1; i < nodes.size(); ++i)
        children[static_cast<size_t>(nodes[i].parent)].push_back(static_cast<int>(i));
      std::vector<int> stack{0};
      while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : children[static_cast<size_t>(u)]) {
          nodes[static_cast<size_t>(v)].cost =
              nodes[static_cast<size_t>(u)].cost + nodes[static_cast<size_t>(v)].edgeCost;
          stack.push_back(v);
        }
      }
    }
    updateGoal();
  }

  plan.treeSize = static_cast<int>(nodes.size());
  if (bestGoalNode < 0) return plan;

  std::vector<int> chain;
  for (int i = bestGoalNode; i != -1; i = nodes[static_cast<size_t>(i)].parent)
    chain.push_back(i);
  std::reverse(chain.begin(), chain.end());
  for (int i : chain) plan.waypoints.push_back(nodes[static_cast<size_t>(i)].p);
  bool endsAtGoal = false;
  if ((g0 - plan.waypoints.back()).norm() > 1e-12) {
    detail::EdgeEval e = detail::evalEdge(plan.waypoints.back(), g0, risk, &vol, p);
    if (e.valid) {
      plan.waypoints.push_back(g0);
      endsAtGoal = true;
    }
  } else {
    endsAtGoal = true;
  }
  for (size_t i = 0; i + 1 < plan.waypoints.size(); ++i) {
    detail::EdgeEval e =
        detail::evalEdge(plan.waypoints[i], plan.waypoints[i + 1], risk, &vol, p);
    plan.travelCost += e.length;
    plan.riskCost += e.risk;
    plan.rewardTerm += e.reward;
    plan.totalCost += e.cost;
  }
  for (size_t i = 0; i < plan.waypoints.size(); ++i) {
    bool last = i + 1 == plan.waypoints.size();
    if (last && endsAtGoal)
      plan.poses.push_back(goal.pose);
    else
      plan.poses.push_back(orient(plan.waypoints[i]));
  }
  plan.success = true;
  return plan;
}

// CSV rows: t, position, w-first quaternion of the orientation.
struct TrajectorySample {
  double t = 0.0;
  Pose pose;
};

inline void writeTrajectoryCsv(const std::vector<TrajectorySample>& samples,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,x,y,z,qw,qx,qy,qz\n";
  char buf[256];
  for (const TrajectorySample& s : samples) {
    Eigen::Vector4d q = rotationToQuaternion(s.pose.R);
    std::snprintf(buf, sizeof(buf),
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t,
                  s.pose.t.x(), s.pose.t.y(), s.pose.t.z(), q[0], q[1], q[2],
                  q[3]);
    out << buf;
  }
}

inline nlohmann::json plannerStepJson(const std::vector<CandidateViewpoint>& cands,
                                      const NbvChoice& choice,
                                      const PathPlan& plan) {
  nlohmann::json j;
  nlohmann::json arr = nlohmann::json::array();
  for (const CandidateViewpoint& c : cands) {
    arr.push_back({{"id", c.id},
                   {"reward", c.reward},
                   {"gain_imp", c.gainImp},
                   {"gain_exp", c.gainExp},
                   {"visible", c.visible.size()},
                   {"feasible", c.feasible},
                   {"clearance", c.clearance}});
  }
  j["candidates"] = std::move(arr);
  j["chosen"] = choice.index;
  j["degraded"] = choice.degraded;
  j["path"] = {{"success", plan.success},
               {"waypoints", plan.waypoints.size()},
               {"travel_cost", plan.travelCost},
               {"risk_cost", plan.riskCost},
               {"reward_term", plan.rewardTerm},
               {"total_cost", plan.totalCost},
               {"tree_size", plan.treeSize},
               {"best_goal_distance", plan.bestGoalDistance},
               {"cost_trace", plan.costTrace}};
  return j;
}

inline void writePlannerJson(const std::vector<nlohmann::json>& steps,
                             const std::string& path) {
  nlohmann::json j;
  j["steps"] = steps;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace arecon
