#pragma once

#include <array>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "arecon/implicit_field.hpp"

namespace arecon {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  bool hasSurface = false;

  bool empty() const { return faces.empty(); }
};

namespace detail {

// Six tetrahedra per cell, all sharing the 0-6 diagonal. Every cube face is
// split along the same absolute diagonal as its neighbor's matching face, so
// triangles weld across cells and the extracted surface is watertight
// wherever the level set is closed.
constexpr int kTetCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kTets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                             {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};

}  // namespace detail

// Zero-level-set extraction by marching tetrahedra on a (res+1)^3 corner
// lattice over `bounds`. Crossing vertices interpolate linearly along lattice
// edges and are deduplicated by edge, giving a shared-vertex mesh. Triangles
// are oriented so normals point toward positive field values. A field with
// no sign change yields an empty mesh with hasSurface = false.
template <typename SdfFn>
TriMesh marchingMesh(SdfFn&& sdf, const Aabb& bounds, int res) {
  if (res < 8) throw std::invalid_argument("mesh resolution must be >= 8");
  if (!bounds.valid()) throw std::invalid_argument("mesh bounds degenerate");
  const int n = res + 1;
  const Vec3 cell = bounds.extent() / res;

  std::vector<double> value(static_cast<size_t>(n) * n * n);
  auto corner = [&](int i, int j, int k) -> Vec3 {
    return bounds.min + Vec3(i * cell.x(), j * cell.y(), k * cell.z());
  };
  auto cid = [&](int i, int j, int k) {
    return (static_cast<std::int64_t>(k) * n + j) * n + i;
  };
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double s = sdf(corner(i, j, k));
        // exact zeros would park vertices on shared corners and collapse
        // triangles; nudge them to the outside
        value[cid(i, j, k)] = s == 0.0 ? 1e-12 : s;
      }

  TriMesh mesh;
  std::unordered_map<std::uint64_t, int> edgeVertex;
  const std::uint64_t nTotal = static_cast<std::uint64_t>(n) * n * n;
  auto vertexOnEdge = [&](std::int64_t ca, std::int64_t cb) {
    std::int64_t a = std::min(ca, cb), b = std::max(ca, cb);
    std::uint64_t k = static_cast<std::uint64_t>(a) * nTotal +
                      static_cast<std::uint64_t>(b);
    auto it = edgeVertex.find(k);
    if (it != edgeVertex.end()) return it->second;
    double sa = value[a], sb = value[b];
    double t = sa / (sa - sb);
    int ai = static_cast<int>(a % n), aj = static_cast<int>((a / n) % n);
    int ak = static_cast<int>(a / (static_cast<std::int64_t>(n) * n));
    int bi = static_cast<int>(b % n), bj = static_cast<int>((b / n) % n);
    int bk = static_cast<int>(b / (static_cast<std::int64_t>(n) * n));
    Vec3 p = corner(ai, aj, ak) + t * (corner(bi, bj, bk) - corner(ai, aj, ak));
    int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edgeVertex.emplace(k, idx);
    return idx;
  };
  auto emit = [&](int v0, int v1, int v2) {
    if (v0 == v1 || v1 == v2 || v0 == v2) return;
    Vec3 a = mesh.vertices[v0], b = mesh.vertices[v1], c = mesh.vertices[v2];
    Vec3 nrm = (b - a).cross(c - a);
    Vec3 centroid = (a + b + c) / 3.0;
    double h = 0.25 * cell.minCoeff();
    Vec3 grad(sdf(centroid + Vec3(h, 0, 0)) - sdf(centroid - Vec3(h, 0, 0)),
              sdf(centroid + Vec3(0, h, 0)) - sdf(centroid - Vec3(0, h, 0)),
              sdf(centroid + Vec3(0, 0, h)) - sdf(centroid - Vec3(0, 0, h)));
    if (nrm.dot(grad) < 0.0) std::swap(v1, v2);
    mesh.faces.push_back({v0, v1, v2});
  };

  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        std::int64_t corners[8];
        for (int c = 0; c < 8; ++c)
          corners[c] = cid(i + detail::kTetCorner[c][0], j + detail::kTetCorner[c][1],
                           k + detail::kTetCorner[c][2]);
        for (const auto& tet : detail::kTets) {
          int inside[4], outside[4];
          int nin = 0, nout = 0;
          for (int v = 0; v < 4; ++v) {
            if (value[corners[tet[v]]] < 0.0) inside[nin++] = tet[v];
            else outside[nout++] = tet[v];
          }
          if (nin == 0 || nin == 4) continue;
          mesh.hasSurface = true;
          if (nin == 1) {
            emit(vertexOnEdge(corners[inside[0]], corners[outside[0]]),
                 vertexOnEdge(corners[inside[0]], corners[outside[1]]),
                 vertexOnEdge(corners[inside[0]], corners[outside[2]]));
          } else if (nin == 3) {
            emit(vertexOnEdge(corners[outside[0]], corners[inside[0]]),
                 vertexOnEdge(corners[outside[0]], corners[inside[1]]),
                 vertexOnEdge(corners[outside[0]], corners[inside[2]]));
          } else {
            // two in, two out: the crossing quad AC-AD-BD-BC, split once
            int ac = vertexOnEdge(corners[inside[0]], corners[outside[0]]);
            int ad = vertexOnEdge(corners[inside[0]], corners[outside[1]]);
            int bd = vertexOnEdge(corners[inside[1]], corners[outside[1]]);
            int bc = vertexOnEdge(corners[inside[1]], corners[outside[0]]);
            emit(ac, ad, bd);
            emit(ac, bd, bc);
          }
        }
      }
  return mesh;
}

inline TriMesh exportMesh(const ImplicitField& field, int res) {
  return marchingMesh([&](const Vec3& p) { return field.eval(p).s; },
                      field.grid().bounds(), res);
}

// V - E + F over unique undirected edges; 2 for a closed genus-0 surface.
inline std::int64_t eulerCharacteristic(const TriMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  return static_cast<std::int64_t>(mesh.vertices.size()) -
         static_cast<std::int64_t>(edges.size()) +
         static_cast<std::int64_t>(mesh.faces.size());
}

inline void writeMeshPly(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size()
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  out.precision(7);
  for (const Vec3& v : mesh.vertices)
    out << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces)
    out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
}

}  // namespace arecon
