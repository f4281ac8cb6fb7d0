// Triangle mesh with per-vertex grid-edge provenance (set by marching
// cubes, consumed by its backward pass) and topology checks.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "meshforge/math.hpp"

namespace meshforge {

// Which grid edge a vertex lies on: v = (1-w)*node_a + w*node_b.
struct VertexProvenance {
  int64_t node_a = -1;  // flat grid index
  int64_t node_b = -1;
  double w = 0;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // CCW = outward
  std::vector<Vec3> vertex_normals;
  std::vector<VertexProvenance> provenance;  // empty unless produced by MC
  int grid_res = 0;                          // resolution of the source grid, 0 if none

  size_t vertex_count() const { return vertices.size(); }
  size_t face_count() const { return faces.size(); }
  bool empty() const { return faces.empty(); }

  Vec3 face_normal(size_t f) const {
    const auto& t = faces[f];
    return normalized(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
  }
  double face_area(size_t f) const {
    const auto& t = faces[f];
    return 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
  }
  double total_area() const {
    double a = 0;
    for (size_t f = 0; f < faces.size(); ++f) a += face_area(f);
    return a;
  }
  Box3 bounds() const {
    Box3 b = Box3::empty();
    for (const auto& v : vertices) b.expand(v);
    return b;
  }
};

struct WatertightReport {
  bool is_watertight = false;
  int64_t boundary_edge_count = 0;
  int64_t non_manifold_edge_count = 0;
  int64_t euler_characteristic = 0;
};

// Counts half-edge pairings; watertight iff every undirected edge has
// exactly 2 incident faces.
inline WatertightReport watertight_check(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edge_faces;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      edge_faces[{a, b}]++;
    }
  }
  WatertightReport rep;
  for (const auto& [edge, count] : edge_faces) {
    if (count == 1) rep.boundary_edge_count++;
    if (count > 2) rep.non_manifold_edge_count++;
  }
  rep.is_watertight = !mesh.faces.empty() && rep.boundary_edge_count == 0 &&
                      rep.non_manifold_edge_count == 0;
  rep.euler_characteristic = int64_t(mesh.vertex_count()) - int64_t(edge_faces.size()) +
                             int64_t(mesh.face_count());
  return rep;
}

// Keeps only the face-connected component with the largest face count and
// drops unreferenced vertices. Per-vertex arrays (normals, provenance)
// follow the reindexing.
inline TriangleMesh largest_component(const TriangleMesh& mesh) {
  size_t nv = mesh.vertex_count();
  std::vector<int> parent(nv);
  for (size_t i = 0; i < nv; ++i) parent[i] = int(i);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& f : mesh.faces) {
    int a = find(f[0]);
    parent[find(f[1])] = a;
    parent[find(f[2])] = a;
  }
  std::vector<int64_t> face_count(nv, 0);
  for (const auto& f : mesh.faces) face_count[size_t(find(f[0]))]++;
  int best = 0;
  for (size_t i = 0; i < nv; ++i)
    if (face_count[i] > face_count[size_t(best)]) best = int(i);

  TriangleMesh out;
  out.grid_res = mesh.grid_res;
  std::vector<int> remap(nv, -1);
  bool has_n = mesh.vertex_normals.size() == nv;
  bool has_p = mesh.provenance.size() == nv;
  for (const auto& f : mesh.faces) {
    if (find(f[0]) != best) continue;
    std::array<int, 3> nf;
    for (int k = 0; k < 3; ++k) {
      int v = f[k];
      if (remap[size_t(v)] < 0) {
        remap[size_t(v)] = int(out.vertices.size());
        out.vertices.push_back(mesh.vertices[size_t(v)]);
        if (has_n) out.vertex_normals.push_back(mesh.vertex_normals[size_t(v)]);
        if (has_p) out.provenance.push_back(mesh.provenance[size_t(v)]);
      }
      nf[k] = remap[size_t(v)];
    }
    out.faces.push_back(nf);
  }
  return out;
}

}  // namespace meshforge
