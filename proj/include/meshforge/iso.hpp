// Differentiable marching cubes. Forward is the classic 256-case table
// with linear edge interpolation; backward routes -(dL/dV . n) onto the
// two grid nodes of each vertex's provenance edge.
//
// Convention (frozen by the Poisson solver's sign tests): values below the
// isolevel are interior, faces wind CCW seen from outside, and vertex
// normals follow +grad(phi).

#pragma once

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "meshforge/grid.hpp"
#include "meshforge/mc_tables.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

namespace detail {

// Central-difference gradient of phi at a grid node, periodic wrap,
// node spacing h in output units.
inline Vec3 node_gradient(const ScalarGrid& g, int x, int y, int z, double h) {
  int r = g.res;
  auto wrap = [r](int i) { return (i % r + r) % r; };
  double inv2h = 1.0 / (2.0 * h);
  return {(g.at(wrap(x + 1), y, z) - g.at(wrap(x - 1), y, z)) * inv2h,
          (g.at(x, wrap(y + 1), z) - g.at(x, wrap(y - 1), z)) * inv2h,
          (g.at(x, y, wrap(z + 1)) - g.at(x, y, wrap(z - 1))) * inv2h};
}

}  // namespace detail

// Extracts the isosurface of `grid` at `iso`. Node (i,j,k) maps to
// origin + (i,j,k)*spacing. Throws if no cell crosses the isolevel.
inline TriangleMesh marching_cubes(const ScalarGrid& grid, double iso,
                                   Vec3 origin = {0, 0, 0}, double spacing = -1.0) {
  if (!grid.finite()) throw std::runtime_error("marching_cubes: non-finite grid");
  int r = grid.res;
  if (r < 2) throw std::runtime_error("marching_cubes: resolution < 2");
  if (spacing <= 0) spacing = 1.0 / r;

  TriangleMesh mesh;
  mesh.grid_res = r;
  // one vertex per crossed grid edge, keyed by canonical (low node, high node)
  std::unordered_map<uint64_t, int> edge_vertex;
  edge_vertex.reserve(1 << 16);

  auto flat = [r](int x, int y, int z) -> int64_t { return (int64_t(z) * r + y) * r + x; };

  auto get_vertex = [&](int ax, int ay, int az, int bx, int by, int bz) -> int {
    int64_t fa = flat(ax, ay, az), fb = flat(bx, by, bz);
    if (fa > fb) {
      std::swap(fa, fb);
      std::swap(ax, bx);
      std::swap(ay, by);
      std::swap(az, bz);
    }
    uint64_t key = (uint64_t(fa) << 32) | uint64_t(fb);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;

    double va = grid.values[size_t(fa)], vb = grid.values[size_t(fb)];
    double w = (iso - va) / (vb - va);
    w = clampd(w, 0.0, 1.0);
    Vec3 pa = origin + Vec3{double(ax), double(ay), double(az)} * spacing;
    Vec3 pb = origin + Vec3{double(bx), double(by), double(bz)} * spacing;
    Vec3 pos = pa * (1.0 - w) + pb * w;

    Vec3 ga = detail::node_gradient(grid, ax, ay, az, spacing);
    Vec3 gb = detail::node_gradient(grid, bx, by, bz, spacing);
    Vec3 n = normalized(ga * (1.0 - w) + gb * w);

    int idx = int(mesh.vertices.size());
    mesh.vertices.push_back(pos);
    mesh.vertex_normals.push_back(n);
    mesh.provenance.push_back({fa, fb, w});
    edge_vertex.emplace(key, idx);
    return idx;
  };

  for (int z = 0; z < r - 1; ++z)
    for (int y = 0; y < r - 1; ++y)
      for (int x = 0; x < r - 1; ++x) {
        int cube = 0;
        double corner[8];
        for (int c = 0; c < 8; ++c) {
          corner[c] = grid.at(x + kMcCornerOffset[c][0], y + kMcCornerOffset[c][1],
                              z + kMcCornerOffset[c][2]);
          if (corner[c] < iso) cube |= 1 << c;
        }
        if (cube == 0 || cube == 255) continue;

        const signed char* tri = kMcTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          int vi[3];
          for (int k = 0; k < 3; ++k) {
            int e = tri[t + k];
            int ca = kMcEdgeCorners[e][0], cb = kMcEdgeCorners[e][1];
            vi[k] = get_vertex(x + kMcCornerOffset[ca][0], y + kMcCornerOffset[ca][1],
                               z + kMcCornerOffset[ca][2], x + kMcCornerOffset[cb][0],
                               y + kMcCornerOffset[cb][1], z + kMcCornerOffset[cb][2]);
          }
          if (vi[0] == vi[1] || vi[1] == vi[2] || vi[0] == vi[2]) continue;
          // table winding has inside-negative normals pointing toward
          // decreasing values; flip so CCW faces outward (+grad phi)
          mesh.faces.push_back({vi[0], vi[2], vi[1]});
        }
      }

  if (mesh.faces.empty()) throw std::runtime_error("marching_cubes: surface is empty");
  return mesh;
}

// Backward pass: per vertex g = -(dL/dV . n), scattered to the two
// provenance nodes with weights (1-w) and w.
inline ScalarGrid mc_backward(const TriangleMesh& mesh, const std::vector<Vec3>& dL_dV) {
  if (mesh.provenance.size() != mesh.vertex_count() || mesh.grid_res == 0)
    throw std::runtime_error("mc_backward: mesh has no marching-cubes provenance");
  if (dL_dV.size() != mesh.vertex_count())
    throw std::runtime_error("mc_backward: gradient size mismatch");

  ScalarGrid dL_dPhi(mesh.grid_res);
  for (size_t v = 0; v < mesh.vertex_count(); ++v) {
    const VertexProvenance& pr = mesh.provenance[v];
    double g = -dot(dL_dV[v], mesh.vertex_normals[v]);
    dL_dPhi.values[size_t(pr.node_a)] += (1.0 - pr.w) * g;
    dL_dPhi.values[size_t(pr.node_b)] += pr.w * g;
  }
  return dL_dPhi;
}

}  // namespace meshforge
