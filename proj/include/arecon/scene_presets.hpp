#pragma once

#include "arecon/scene.hpp"

namespace arecon {

// Closed 6x6x2.4 room built from six inward-facing half-space walls, so the
// zero level set inside the bounds is exactly the interior surface.
inline void addRoomShell(SceneSpec& s, double hx, double hy, double zCeil) {
  auto plane = [](const Vec3& n, double offset) {
    Primitive p;
    p.shape = ShapeType::Plane;
    p.normal = n;
    p.offset = offset;
    return p;
  };
  s.primitives.push_back(plane(Vec3(0, 0, 1), 0.0));        // floor z=0
  s.primitives.push_back(plane(Vec3(0, 0, -1), -zCeil));    // ceiling
  s.primitives.push_back(plane(Vec3(1, 0, 0), -hx));        // wall x=-hx
  s.primitives.push_back(plane(Vec3(-1, 0, 0), -hx));       // wall x=+hx
  s.primitives.push_back(plane(Vec3(0, 1, 0), -hy));        // wall y=-hy
  s.primitives.push_back(plane(Vec3(0, -1, 0), -hy));       // wall y=+hy
}

inline Primitive makeSphere(const Vec3& c, double r) {
  Primitive p;
  p.shape = ShapeType::Sphere;
  p.center = c;
  p.radius = r;
  return p;
}

inline Primitive makeBox(const Vec3& c, const Vec3& half) {
  Primitive p;
  p.shape = ShapeType::Box;
  p.center = c;
  p.halfExtents = half;
  return p;
}

// Single room with a floating sphere and a crate; the fit/rendering testbed.
inline SceneSpec makeSphereRoom() {
  SceneSpec s;
  s.name = "sphere_room";
  s.bounds.min = Vec3(-3.4, -3.4, -0.4);
  s.bounds.max = Vec3(3.4, 3.4, 2.8);
  addRoomShell(s, 3.0, 3.0, 2.4);
  s.primitives.push_back(makeSphere(Vec3(1.2, 0.6, 1.0), 0.8));
  s.primitives.push_back(makeBox(Vec3(-1.5, -1.2, 0.45), Vec3(0.5, 0.4, 0.5)));
  s.albedo.kind = AlbedoSpec::Kind::Checker;
  s.albedo.scale = 0.7;
  s.startPosition = Vec3(-2.0, 2.0, 1.2);
  s.startLookAt = Vec3(1.2, 0.6, 1.0);
  s.agentRadius = 0.18;
  s.voxelSize = 0.12;
  return s;
}

// Two rooms split by a wall with a 1.2-wide door; the exploration testbed.
inline SceneSpec makeTwoRoom() {
  SceneSpec s;
  s.name = "two_room";
  s.bounds.min = Vec3(-3.4, -3.4, -0.4);
  s.bounds.max = Vec3(3.4, 3.4, 2.8);
  addRoomShell(s, 3.0, 3.0, 2.4);
  // divider at y=0, door x in [0.3, 1.5], z in [0, 1.8]
  s.primitives.push_back(makeBox(Vec3(-1.375, 0.0, 1.2), Vec3(1.675, 0.15, 1.25)));
  s.primitives.push_back(makeBox(Vec3(2.275, 0.0, 1.2), Vec3(0.775, 0.15, 1.25)));
  s.primitives.push_back(makeBox(Vec3(0.9, 0.0, 2.125), Vec3(0.6, 0.15, 0.325)));
  s.primitives.push_back(makeSphere(Vec3(-1.6, 1.6, 0.7), 0.6));
  s.primitives.push_back(makeBox(Vec3(1.8, -1.8, 0.5), Vec3(0.45, 0.45, 0.55)));
  s.albedo.kind = AlbedoSpec::Kind::Checker;
  s.albedo.scale = 0.8;
  s.startPosition = Vec3(-2.2, 2.2, 1.2);
  s.startLookAt = Vec3(0.9, 0.0, 1.0);
  s.agentRadius = 0.18;
  s.voxelSize = 0.12;
  return s;
}

}  // namespace arecon
