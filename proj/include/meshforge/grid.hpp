// Regular grids over the unit cube. ScalarGrid nodes sit at i/r (periodic,
// spacing 1/r) which matches the FFT solver's domain; OccupancyGrid cell
// centers sit at (i+0.5)/r.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshforge/math.hpp"

namespace meshforge {

struct ScalarGrid {
  int res = 0;
  std::vector<double> values;  // index = (z*res + y)*res + x

  ScalarGrid() = default;
  explicit ScalarGrid(int r, double fill = 0.0)
      : res(r), values(size_t(r) * r * r, fill) {}

  size_t idx(int x, int y, int z) const { return (size_t(z) * res + y) * res + x; }
  double& at(int x, int y, int z) { return values[idx(x, y, z)]; }
  double at(int x, int y, int z) const { return values[idx(x, y, z)]; }

  size_t size() const { return values.size(); }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Periodic trilinear stencil for a point in unit-cube coordinates against
// nodes at i/r. Shared by the scatter (adjoint: gather) pair.
struct TrilinearStencil {
  int ix[2], iy[2], iz[2];
  double wx[2], wy[2], wz[2];

  TrilinearStencil(const Vec3& p, int r) {
    auto split = [r](double t, int* i, double* w) {
      double f = t * r;
      double f0 = std::floor(f);
      double frac = f - f0;
      int a = int(f0);
      a %= r;
      if (a < 0) a += r;
      i[0] = a;
      i[1] = (a + 1) % r;
      w[0] = 1.0 - frac;
      w[1] = frac;
    };
    split(p.x, ix, wx);
    split(p.y, iy, wy);
    split(p.z, iz, wz);
  }
};

inline double trilinear_sample(const ScalarGrid& g, const Vec3& p) {
  TrilinearStencil s(p, g.res);
  double v = 0;
  for (int c = 0; c < 8; ++c) {
    int a = c & 1, b = (c >> 1) & 1, d = (c >> 2) & 1;
    v += s.wx[a] * s.wy[b] * s.wz[d] * g.at(s.ix[a], s.iy[b], s.iz[d]);
  }
  return v;
}

// d(trilinear_sample)/dp; piecewise-constant in each cell.
inline Vec3 trilinear_sample_grad(const ScalarGrid& g, const Vec3& p) {
  TrilinearStencil s(p, g.res);
  Vec3 grad{};
  double r = g.res;
  for (int c = 0; c < 8; ++c) {
    int a = c & 1, b = (c >> 1) & 1, d = (c >> 2) & 1;
    double v = g.at(s.ix[a], s.iy[b], s.iz[d]);
    double sx = a ? 1.0 : -1.0, sy = b ? 1.0 : -1.0, sz = d ? 1.0 : -1.0;
    grad.x += sx * r * s.wy[b] * s.wz[d] * v;
    grad.y += sy * r * s.wx[a] * s.wz[d] * v;
    grad.z += sz * r * s.wx[a] * s.wy[b] * v;
  }
  return grad;
}

inline void trilinear_scatter(ScalarGrid& g, const Vec3& p, double value) {
  TrilinearStencil s(p, g.res);
  for (int c = 0; c < 8; ++c) {
    int a = c & 1, b = (c >> 1) & 1, d = (c >> 2) & 1;
    g.at(s.ix[a], s.iy[b], s.iz[d]) += s.wx[a] * s.wy[b] * s.wz[d] * value;
  }
}

// r³ x 3 vector field (one ScalarGrid per component).
struct VectorGrid {
  int res = 0;
  ScalarGrid comp[3];

  VectorGrid() = default;
  explicit VectorGrid(int r) : res(r) {
    for (auto& c : comp) c = ScalarGrid(r);
  }
};

// Visual hull occupancy; values in [0,1], cell centers at (i+0.5)/r.
struct OccupancyGrid {
  int res = 0;
  std::vector<double> values;

  explicit OccupancyGrid(int r = 0, double fill = 0.0)
      : res(r), values(size_t(r) * r * r, fill) {}

  size_t idx(int x, int y, int z) const { return (size_t(z) * res + y) * res + x; }
  double& at(int x, int y, int z) { return values[idx(x, y, z)]; }
  double at(int x, int y, int z) const { return values[idx(x, y, z)]; }

  Vec3 cell_center_unit(int x, int y, int z) const {
    return {(x + 0.5) / res, (y + 0.5) / res, (z + 0.5) / res};
  }
};

// Debug dump of a scalar grid as raw r³ f32 little-endian.
inline void dump_grid_f32(const std::string& path, const ScalarGrid& g) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dump_grid_f32: cannot open " + path);
  for (double v : g.values) {
    float fv = float(v);
    f.write(reinterpret_cast<const char*>(&fv), sizeof(float));
  }
}

}  // namespace meshforge
