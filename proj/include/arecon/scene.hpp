#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arecon/math.hpp"

namespace arecon {

enum class ShapeType { Sphere, Box, Plane };

// One solid. Sphere: center+radius. Box: center+halfExtents.
// Plane: n.p - offset, solid on the negative side.
struct Primitive {
  ShapeType shape = ShapeType::Sphere;
  Vec3 center{Vec3::Zero()};
  double radius = 1.0;
  Vec3 halfExtents{Vec3::Ones()};
  Vec3 normal{Vec3(0, 0, 1)};
  double offset = 0.0;

  double sdf(const Vec3& p) const {
    switch (shape) {
      case ShapeType::Sphere:
        return (p - center).norm() - radius;
      case ShapeType::Box: {
        Vec3 q = (p - center).cwiseAbs() - halfExtents;
        Vec3 qpos = q.cwiseMax(0.0);
        return qpos.norm() + std::min(q.maxCoeff(), 0.0);
      }
      case ShapeType::Plane:
        return normal.dot(p) - offset;
    }
    return 0.0;
  }
};

struct AlbedoSpec {
  enum class Kind { Checker, Noise } kind = Kind::Checker;
  double scale = 1.0;
  Vec3 colorA{Vec3(0.85, 0.8, 0.72)};
  Vec3 colorB{Vec3(0.32, 0.4, 0.55)};

  Vec3 eval(const Vec3& p) const {
    if (kind == Kind::Checker) {
      Vec3 q = p / scale;
      int s = (static_cast<int>(std::floor(q.x())) +
               static_cast<int>(std::floor(q.y())) +
               static_cast<int>(std::floor(q.z()))) & 1;
      return s ? colorB : colorA;
    }
    Vec3 q = p / scale;
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      double n = valueNoise(q, 0x5eedULL + ch);
      c[ch] = clampd(colorA[ch] + (colorB[ch] - colorA[ch]) * n, 0.0, 1.0);
    }
    return c;
  }
};

// Analytic test environment: min-union of solids, procedural albedo,
// plus the agent defaults that belong to the scene (start pose, radius).
struct SceneSpec {
  std::string name = "scene";
  std::vector<Primitive> primitives;
  AlbedoSpec albedo;
  Aabb bounds;
  Vec3 background{Vec3::Zero()};
  Vec3 startPosition{Vec3::Zero()};
  Vec3 startLookAt{Vec3(1, 0, 0)};
  double agentRadius = 0.18;
  double voxelSize = 0.12;

  double sceneScale() const { return bounds.maxExtent(); }

  void validate() const {
    if (!bounds.valid()) throw std::invalid_argument("scene bounds degenerate");
    if (primitives.empty()) throw std::invalid_argument("scene has no primitives");
    for (const auto& pr : primitives) {
      // intersects-bounds check: SDF must change sign or be small somewhere
      // near the box; sample corners + center.
      double lo = 1e30, hi = -1e30;
      for (int c = 0; c < 9; ++c) {
        Vec3 p = c == 8 ? bounds.center()
                        : Vec3(c & 1 ? bounds.max.x() : bounds.min.x(),
                               c & 2 ? bounds.max.y() : bounds.min.y(),
                               c & 4 ? bounds.max.z() : bounds.min.z());
        double s = pr.sdf(p);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      if (lo > bounds.extent().norm())
        throw std::invalid_argument("primitive does not intersect bounds");
    }
  }
};

// Exact for single primitives; min-union across the list (correct outside,
// a lower bound inside overlaps). Negative inside solids. Total function.
inline double gtSdf(const SceneSpec& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& pr : scene.primitives) best = std::min(best, pr.sdf(p));
  return best;
}

// Central-difference gradient; adequate for projection and shading normals.
inline Vec3 gtSdfGrad(const SceneSpec& scene, const Vec3& p, double h = 1e-5) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 dp = Vec3::Zero();
    dp[a] = h;
    g[a] = (gtSdf(scene, p + dp) - gtSdf(scene, p - dp)) / (2 * h);
  }
  return g;
}

// ---------------------------------------------------------------- JSON I/O

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j["name"] = s.name;
  j["bounds"] = {{"min", {s.bounds.min.x(), s.bounds.min.y(), s.bounds.min.z()}},
                 {"max", {s.bounds.max.x(), s.bounds.max.y(), s.bounds.max.z()}}};
  j["background"] = {s.background.x(), s.background.y(), s.background.z()};
  j["start"] = {{"position", {s.startPosition.x(), s.startPosition.y(), s.startPosition.z()}},
                {"look_at", {s.startLookAt.x(), s.startLookAt.y(), s.startLookAt.z()}}};
  j["agent_radius"] = s.agentRadius;
  j["voxel_size"] = s.voxelSize;
  nlohmann::json alb;
  alb["type"] = s.albedo.kind == AlbedoSpec::Kind::Checker ? "checker" : "noise";
  alb["scale"] = s.albedo.scale;
  alb["color_a"] = {s.albedo.colorA.x(), s.albedo.colorA.y(), s.albedo.colorA.z()};
  alb["color_b"] = {s.albedo.colorB.x(), s.albedo.colorB.y(), s.albedo.colorB.z()};
  j["albedo"] = alb;
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : s.primitives) {
    nlohmann::json e;
    switch (p.shape) {
      case ShapeType::Sphere:
        e["shape"] = "sphere";
        e["center"] = {p.center.x(), p.center.y(), p.center.z()};
        e["radius"] = p.radius;
        break;
      case ShapeType::Box:
        e["shape"] = "box";
        e["center"] = {p.center.x(), p.center.y(), p.center.z()};
        e["half_extents"] = {p.halfExtents.x(), p.halfExtents.y(), p.halfExtents.z()};
        break;
      case ShapeType::Plane:
        e["shape"] = "plane";
        e["normal"] = {p.normal.x(), p.normal.y(), p.normal.z()};
        e["offset"] = p.offset;
        break;
    }
    prims.push_back(e);
  }
  j["primitives"] = prims;
}

inline Vec3 vec3FromJson(const nlohmann::json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  s.name = j.value("name", "scene");
  s.bounds.min = vec3FromJson(j.at("bounds").at("min"));
  s.bounds.max = vec3FromJson(j.at("bounds").at("max"));
  if (j.contains("background")) s.background = vec3FromJson(j.at("background"));
  if (j.contains("start")) {
    s.startPosition = vec3FromJson(j.at("start").at("position"));
    s.startLookAt = vec3FromJson(j.at("start").at("look_at"));
  }
  s.agentRadius = j.value("agent_radius", 0.18);
  s.voxelSize = j.value("voxel_size", 0.12);
  if (j.contains("albedo")) {
    const auto& a = j.at("albedo");
    std::string kind = a.value("type", "checker");
    s.albedo.kind = kind == "noise" ? AlbedoSpec::Kind::Noise : AlbedoSpec::Kind::Checker;
    s.albedo.scale = a.value("scale", 1.0);
    if (a.contains("color_a")) s.albedo.colorA = vec3FromJson(a.at("color_a"));
    if (a.contains("color_b")) s.albedo.colorB = vec3FromJson(a.at("color_b"));
  }
  s.primitives.clear();
  for (const auto& e : j.at("primitives")) {
    Primitive p;
    std::string shape = e.at("shape").get<std::string>();
    if (shape == "sphere") {
      p.shape = ShapeType::Sphere;
      p.center = vec3FromJson(e.at("center"));
      p.radius = e.at("radius").get<double>();
    } else if (shape == "box") {
      p.shape = ShapeType::Box;
      p.center = vec3FromJson(e.at("center"));
      p.halfExtents = vec3FromJson(e.at("half_extents"));
    } else if (shape == "plane") {
      p.shape = ShapeType::Plane;
      p.normal = vec3FromJson(e.at("normal")).normalized();
      p.offset = e.at("offset").get<double>();
    } else {
      throw std::invalid_argument("unknown primitive shape: " + shape);
    }
    s.primitives.push_back(p);
  }
  s.validate();
}

inline SceneSpec loadScene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path);
  nlohmann::json j;
  in >> j;
  return j.get<SceneSpec>();
}

inline void saveScene(const SceneSpec& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = s;
  out << j.dump(2) << "\n";
}

}  // namespace arecon
