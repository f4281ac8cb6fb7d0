// Learnable dense reflectance grid. Raw values are unconstrained; the
// activation maps them to (diffuse rgb, specular rgb, roughness) with
// sigmoid ranges, so optimizer updates never need clamping.

#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshforge/grid.hpp"
#include "meshforge/math.hpp"

namespace meshforge {

constexpr int kTexChannels = 7;

struct TextureGrid {
  int res = 0;
  std::vector<double> raw;  // index = ((z*res + y)*res + x)*7 + c

  TextureGrid() = default;
  explicit TextureGrid(int r) : res(r), raw(size_t(r) * r * r * kTexChannels, 0.0) {}

  size_t node_index(int x, int y, int z) const { return ((size_t(z) * res + y) * res + x); }
  double* node(int x, int y, int z) { return &raw[node_index(x, y, z) * kTexChannels]; }
  const double* node(int x, int y, int z) const { return &raw[node_index(x, y, z) * kTexChannels]; }

  // Neutral start: a_d = 0.5 gray, a_s = 0.04, alpha = 0.5.
  static TextureGrid neutral(int r) {
    TextureGrid t(r);
    double raw_ad = 0.0;                                    // sigmoid(0) = 0.5
    double raw_as = std::log(0.04 / 0.96);                  // sigmoid^-1(0.04)
    double raw_alpha = std::log((0.5 - 0.01) / (1.0 - 0.5));  // alpha act inverse at 0.5
    for (size_t i = 0; i < t.raw.size(); i += kTexChannels) {
      t.raw[i + 0] = t.raw[i + 1] = t.raw[i + 2] = raw_ad;
      t.raw[i + 3] = t.raw[i + 4] = t.raw[i + 5] = raw_as;
      t.raw[i + 6] = raw_alpha;
    }
    return t;
  }
};

inline std::array<double, kTexChannels> tex_activate(const std::array<double, kTexChannels>& raw) {
  std::array<double, kTexChannels> out;
  for (int c = 0; c < 6; ++c) out[c] = sigmoid(raw[c]);
  out[6] = 0.01 + 0.99 * sigmoid(raw[6]);
  return out;
}

inline std::array<double, kTexChannels> tex_activate_deriv(
    const std::array<double, kTexChannels>& raw) {
  std::array<double, kTexChannels> out;
  for (int c = 0; c < 6; ++c) {
    double s = sigmoid(raw[c]);
    out[c] = s * (1.0 - s);
  }
  double s = sigmoid(raw[6]);
  out[6] = 0.99 * s * (1.0 - s);
  return out;
}

namespace detail {

inline std::array<double, kTexChannels> tex_raw_sample(const TextureGrid& t, const Vec3& p) {
  TrilinearStencil s(p, t.res);
  std::array<double, kTexChannels> raw{};
  for (int c8 = 0; c8 < 8; ++c8) {
    int a = c8 & 1, b = (c8 >> 1) & 1, d = (c8 >> 2) & 1;
    double w = s.wx[a] * s.wy[b] * s.wz[d];
    const double* n = t.node(s.ix[a], s.iy[b], s.iz[d]);
    for (int c = 0; c < kTexChannels; ++c) raw[c] += w * n[c];
  }
  return raw;
}

}  // namespace detail

// Trilinear raw interpolation followed by the channel activation.
// Positions outside [0,1]^3 are clamped.
inline std::array<double, kTexChannels> tex_sample(const TextureGrid& t, Vec3 p) {
  p.x = clampd(p.x, 0.0, 1.0);
  p.y = clampd(p.y, 0.0, 1.0);
  p.z = clampd(p.z, 0.0, 1.0);
  return tex_activate(detail::tex_raw_sample(t, p));
}

inline std::vector<std::array<double, kTexChannels>> tex_sample_many(
    const TextureGrid& t, const std::vector<Vec3>& positions) {
  std::vector<std::array<double, kTexChannels>> out(positions.size());
  for (size_t i = 0; i < positions.size(); ++i) out[i] = tex_sample(t, positions[i]);
  return out;
}

// Exact reverse of tex_sample. Accumulates into dL_draw (same layout as
// TextureGrid::raw) and returns per-position gradients.
inline void tex_sample_adjoint(const TextureGrid& t, const std::vector<Vec3>& positions,
                               const std::vector<std::array<double, kTexChannels>>& dL_dparams,
                               std::vector<double>* dL_draw, std::vector<Vec3>* dL_dpositions) {
  dL_draw->assign(t.raw.size(), 0.0);
  dL_dpositions->assign(positions.size(), Vec3{});
  double r = t.res;
  for (size_t i = 0; i < positions.size(); ++i) {
    Vec3 p = positions[i];
    bool cx = p.x <= 0.0 || p.x >= 1.0, cy = p.y <= 0.0 || p.y >= 1.0,
         cz = p.z <= 0.0 || p.z >= 1.0;
    p.x = clampd(p.x, 0.0, 1.0);
    p.y = clampd(p.y, 0.0, 1.0);
    p.z = clampd(p.z, 0.0, 1.0);

    std::array<double, kTexChannels> raw = detail::tex_raw_sample(t, p);
    std::array<double, kTexChannels> act = tex_activate_deriv(raw);
    std::array<double, kTexChannels> draw;  // dL wrt the interpolated raw vector
    for (int c = 0; c < kTexChannels; ++c) draw[c] = dL_dparams[i][c] * act[c];

    TrilinearStencil s(p, t.res);
    Vec3 dp{};
    for (int c8 = 0; c8 < 8; ++c8) {
      int a = c8 & 1, b = (c8 >> 1) & 1, d = (c8 >> 2) & 1;
      double w = s.wx[a] * s.wy[b] * s.wz[d];
      size_t base = t.node_index(s.ix[a], s.iy[b], s.iz[d]) * kTexChannels;
      const double* n = &t.raw[base];
      double sx = a ? 1.0 : -1.0, sy = b ? 1.0 : -1.0, sz = d ? 1.0 : -1.0;
      for (int c = 0; c < kTexChannels; ++c) {
        (*dL_draw)[base + c] += w * draw[c];
        dp.x += draw[c] * n[c] * sx * r * s.wy[b] * s.wz[d];
        dp.y += draw[c] * n[c] * sy * r * s.wx[a] * s.wz[d];
        dp.z += draw[c] * n[c] * sz * r * s.wx[a] * s.wy[b];
      }
    }
    if (cx) dp.x = 0;
    if (cy) dp.y = 0;
    if (cz) dp.z = 0;
    (*dL_dpositions)[i] = dp;
  }
}

// Factor-2 trilinear upsampling; exact at old-grid node positions.
inline TextureGrid tex_upsample2(const TextureGrid& t, size_t max_res = 512) {
  int r2 = t.res * 2;
  if (size_t(r2) > max_res)
    throw std::runtime_error("tex_upsample2: resolution exceeds configured cap");
  TextureGrid out(r2);
  for (int z = 0; z < r2; ++z)
    for (int y = 0; y < r2; ++y)
      for (int x = 0; x < r2; ++x) {
        Vec3 p{double(x) / r2, double(y) / r2, double(z) / r2};
        std::array<double, kTexChannels> raw = detail::tex_raw_sample(t, p);
        double* n = out.node(x, y, z);
        for (int c = 0; c < kTexChannels; ++c) n[c] = raw[c];
      }
  return out;
}

// Checkpoint blob: "MFTX" magic, u32 resolution, u32 channel count, then
// raw f32 little-endian values in node-major, channel-minor order.
inline void tex_save(const std::string& path, const TextureGrid& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("tex_save: cannot open " + path);
  f.write("MFTX", 4);
  uint32_t res = uint32_t(t.res), ch = kTexChannels;
  f.write(reinterpret_cast<const char*>(&res), 4);
  f.write(reinterpret_cast<const char*>(&ch), 4);
  for (double v : t.raw) {
    float fv = float(v);
    f.write(reinterpret_cast<const char*>(&fv), 4);
  }
}

inline TextureGrid tex_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("tex_load: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "MFTX", 4) != 0) throw std::runtime_error("tex_load: bad magic");
  uint32_t res = 0, ch = 0;
  f.read(reinterpret_cast<char*>(&res), 4);
  f.read(reinterpret_cast<char*>(&ch), 4);
  if (ch != kTexChannels) throw std::runtime_error("tex_load: channel count mismatch");
  TextureGrid t{int(res)};
  for (double& v : t.raw) {
    float fv = 0;
    f.read(reinterpret_cast<char*>(&fv), 4);
    v = fv;
  }
  if (!f) throw std::runtime_error("tex_load: truncated file");
  return t;
}

}  // namespace meshforge
