// Hard z-buffered rasterization with perspective-correct interpolation,
// its attribute/depth adjoint, and a soft silhouette whose gradient
// carries boundary motion. Gradient responsibility is split: interior
// attribute gradients flow through the hard pass with barycentrics
// treated as constants; silhouette gradients move vertices.
//
// Pixel (i,j) is sampled at continuous image coordinate (i,j), matching
// the projection convention in scene.hpp.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "meshforge/image.hpp"
#include "meshforge/math.hpp"
#include "meshforge/mesh.hpp"
#include "meshforge/scene.hpp"

namespace meshforge {

struct GBuffer {
  int width = 0, height = 0, channels = 0;
  Image coverage;              // H x W x 1
  Image depth;                 // H x W x 1, camera z (0 where uncovered)
  std::vector<int32_t> face_id;  // -1 where uncovered
  Image barycentrics;          // H x W x 3, perspective-correct weights
  Image attributes;            // H x W x C
  Image normals;               // H x W x 3, renormalized world normals
};

namespace detail {

struct ProjectedVertex {
  Vec2 screen;
  double z = 0;
  bool valid = false;
};

inline std::vector<ProjectedVertex> project_vertices(const TriangleMesh& mesh,
                                                     const CameraView& cam) {
  std::vector<ProjectedVertex> out(mesh.vertex_count());
  for (size_t i = 0; i < mesh.vertex_count(); ++i) {
    Vec3 xc = cam.world_to_camera.apply(mesh.vertices[i]);
    if (xc.z > 1e-9) {
      out[i].screen = {cam.fx() * xc.x / xc.z + cam.cx(), cam.fy() * xc.y / xc.z + cam.cy()};
      out[i].z = xc.z;
      out[i].valid = true;
    }
  }
  return out;
}

// d(screen u,v)/d(world vertex) rows for the projection chain.
inline void screen_jacobian(const CameraView& cam, const Vec3& world, Vec3* du_dV, Vec3* dv_dV) {
  Vec3 xc = cam.world_to_camera.apply(world);
  Vec3 r0 = cam.world_to_camera.R.row(0);
  Vec3 r1 = cam.world_to_camera.R.row(1);
  Vec3 r2 = cam.world_to_camera.R.row(2);
  double inv_z = 1.0 / xc.z;
  *du_dV = cam.fx() * inv_z * r0 - (cam.fx() * xc.x * inv_z * inv_z) * r2;
  *dv_dV = cam.fy() * inv_z * r1 - (cam.fy() * xc.y * inv_z * inv_z) * r2;
}

}  // namespace detail

// Z-buffered hard rasterization at pixel centers. Back-face culling is
// off; watertight meshes self-occlude via the z-buffer. `attrs` holds
// `channels` values per vertex.
inline GBuffer rasterize(const TriangleMesh& mesh, const std::vector<double>& attrs, int channels,
                         const CameraView& cam, int W, int H) {
  if (mesh.empty()) throw std::runtime_error("rasterize: empty mesh");
  if (W <= 0 || H <= 0) throw std::runtime_error("rasterize: empty output");
  if (attrs.size() != mesh.vertex_count() * size_t(channels))
    throw std::runtime_error("rasterize: attribute row count mismatch");

  GBuffer gb;
  gb.width = W;
  gb.height = H;
  gb.channels = channels;
  gb.coverage = Image(W, H, 1);
  gb.depth = Image(W, H, 1);
  gb.face_id.assign(size_t(W) * H, -1);
  gb.barycentrics = Image(W, H, 3);
  gb.attributes = Image(W, H, channels);
  gb.normals = Image(W, H, 3);

  auto pv = detail::project_vertices(mesh, cam);

  for (size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.faces[f];
    const auto &a = pv[t[0]], &b = pv[t[1]], &c = pv[t[2]];
    if (!a.valid || !b.valid || !c.valid) continue;
    double area = cross2(b.screen - a.screen, c.screen - a.screen);
    if (area == 0) continue;

    int xmin = std::max(0, int(std::ceil(std::min({a.screen.x, b.screen.x, c.screen.x}))));
    int xmax = std::min(W - 1, int(std::floor(std::max({a.screen.x, b.screen.x, c.screen.x}))));
    int ymin = std::max(0, int(std::ceil(std::min({a.screen.y, b.screen.y, c.screen.y}))));
    int ymax = std::min(H - 1, int(std::floor(std::max({a.screen.y, b.screen.y, c.screen.y}))));

    double inv_area = 1.0 / area;
    for (int y = ymin; y <= ymax; ++y)
      for (int x = xmin; x <= xmax; ++x) {
        Vec2 p{double(x), double(y)};
        double l1 = cross2(p - a.screen, c.screen - a.screen) * inv_area;
        double l2 = cross2(b.screen - a.screen, p - a.screen) * inv_area;
        double l0 = 1.0 - l1 - l2;
        if (l0 < 0 || l1 < 0 || l2 < 0) continue;
        // interpolate 1/z linearly in screen space
        double w0 = l0 / a.z, w1 = l1 / b.z, w2 = l2 / c.z;
        double inv_z = w0 + w1 + w2;
        double z = 1.0 / inv_z;
        size_t pi = size_t(y) * W + x;
        if (gb.face_id[pi] >= 0 && gb.depth.data[pi] <= z) continue;
        gb.face_id[pi] = int32_t(f);
        gb.depth.data[pi] = z;
        gb.barycentrics.at(x, y, 0) = w0 * z;
        gb.barycentrics.at(x, y, 1) = w1 * z;
        gb.barycentrics.at(x, y, 2) = w2 * z;
      }
  }

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t pi = size_t(y) * W + x;
      int32_t f = gb.face_id[pi];
      if (f < 0) continue;
      gb.coverage.data[pi] = 1.0;
      const auto& t = mesh.faces[size_t(f)];
      double bw[3] = {gb.barycentrics.at(x, y, 0), gb.barycentrics.at(x, y, 1),
                      gb.barycentrics.at(x, y, 2)};
      for (int ch = 0; ch < channels; ++ch) {
        double v = 0;
        for (int k = 0; k < 3; ++k) v += bw[k] * attrs[size_t(t[k]) * channels + ch];
        gb.attributes.at(x, y, ch) = v;
      }
      if (mesh.vertex_normals.size() == mesh.vertex_count()) {
        Vec3 n{};
        for (int k = 0; k < 3; ++k) n += bw[k] * mesh.vertex_normals[t[k]];
        n = normalized(n);
        gb.normals.at(x, y, 0) = n.x;
        gb.normals.at(x, y, 1) = n.y;
        gb.normals.at(x, y, 2) = n.z;
      }
    }
  return gb;
}

// Transpose of the perspective-correct interpolation (barycentrics fixed):
// attribute gradients to dL_dattrs, depth gradients to world vertices via
// camera z. Both outputs are accumulated into.
inline void raster_adjoint(const GBuffer& gb, const TriangleMesh& mesh, const CameraView& cam,
                           const Image* dL_dattributes, const Image* dL_ddepth,
                           std::vector<double>* dL_dattrs, std::vector<Vec3>* dL_dvertices) {
  if (dL_dattributes &&
      (dL_dattributes->width != gb.width || dL_dattributes->height != gb.height ||
       dL_dattributes->channels != gb.channels))
    throw std::runtime_error("raster_adjoint: attribute gradient buffer mismatch");
  if (dL_ddepth && (dL_ddepth->width != gb.width || dL_ddepth->height != gb.height))
    throw std::runtime_error("raster_adjoint: depth gradient buffer mismatch");

  Vec3 r2 = cam.world_to_camera.R.row(2);
  for (int y = 0; y < gb.height; ++y)
    for (int x = 0; x < gb.width; ++x) {
      size_t pi = size_t(y) * gb.width + x;
      int32_t f = gb.face_id[pi];
      if (f < 0) continue;
      const auto& t = mesh.faces[size_t(f)];
      double bw[3] = {gb.barycentrics.at(x, y, 0), gb.barycentrics.at(x, y, 1),
                      gb.barycentrics.at(x, y, 2)};
      if (dL_dattributes && dL_dattrs)
        for (int ch = 0; ch < gb.channels; ++ch) {
          double g = dL_dattributes->at(x, y, ch);
          if (g == 0) continue;
          for (int k = 0; k < 3; ++k) (*dL_dattrs)[size_t(t[k]) * gb.channels + ch] += bw[k] * g;
        }
      if (dL_ddepth && dL_dvertices) {
        double g = dL_ddepth->data[pi];
        if (g == 0) continue;
        // z = sum_k beta_k z_k; z_k = R.row(2) . V_k + t_z
        for (int k = 0; k < 3; ++k) (*dL_dvertices)[t[k]] += (bw[k] * g) * r2;
      }
    }
}

// ---------------------------------------------------------------------------
// Soft silhouette

struct SoftSilhouette {
  Image value;       // H x W in [0,1]
  Image log_escape;  // per-pixel sum of log(1 - sigma_j), kept for backward
};

namespace detail {

struct EdgeDistance {
  double d = 0;      // distance to the triangle boundary, px
  double sign = 1;   // +1 inside
  int edge = 0;      // nearest edge index
  double t = 0;      // clamped segment parameter on that edge
  Vec2 dir{};        // unit vector from closest boundary point toward p
};

inline EdgeDistance boundary_distance(const Vec2& p, const Vec2 v[3]) {
  EdgeDistance best;
  best.d = 1e300;
  for (int e = 0; e < 3; ++e) {
    const Vec2 &a = v[e], &b = v[(e + 1) % 3];
    Vec2 ab = b - a;
    double len2 = dot(ab, ab);
    double t = len2 > 0 ? clampd(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    Vec2 q = a + ab * t;
    double d = norm(p - q);
    if (d < best.d) {
      best.d = d;
      best.edge = e;
      best.t = t;
      best.dir = d > 1e-12 ? (p - q) * (1.0 / d) : Vec2{0, 0};
    }
  }
  double area = cross2(v[1] - v[0], v[2] - v[0]);
  double s0 = cross2(v[1] - v[0], p - v[0]);
  double s1 = cross2(v[2] - v[1], p - v[1]);
  double s2 = cross2(v[0] - v[2], p - v[2]);
  bool inside = area >= 0 ? (s0 >= 0 && s1 >= 0 && s2 >= 0) : (s0 <= 0 && s1 <= 0 && s2 <= 0);
  best.sign = inside ? 1.0 : -1.0;
  return best;
}

constexpr double kSigmoidArgCap = 30.0;  // saturated region carries no gradient
constexpr double kSilhouetteBand = 3.0;  // px influence band around each triangle

}  // namespace detail

// Per pixel: s = 1 - prod_j (1 - sigmoid(sign_j d_j^2 / gamma)) over
// triangles within a 3 px band. Accumulated in log space.
inline SoftSilhouette soft_silhouette(const TriangleMesh& mesh, const CameraView& cam, int W,
                                      int H, double gamma) {
  if (mesh.empty()) throw std::runtime_error("soft_silhouette: empty mesh");
  if (gamma <= 0) throw std::runtime_error("soft_silhouette: gamma must be positive");

  SoftSilhouette out;
  out.log_escape = Image(W, H, 1, 0.0);
  auto pv = detail::project_vertices(mesh, cam);

  for (size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.faces[f];
    const auto &a = pv[t[0]], &b = pv[t[1]], &c = pv[t[2]];
    if (!a.valid || !b.valid || !c.valid) continue;
    Vec2 v[3] = {a.screen, b.screen, c.screen};
    double band = detail::kSilhouetteBand;
    int xmin = std::max(0, int(std::ceil(std::min({v[0].x, v[1].x, v[2].x}) - band)));
    int xmax = std::min(W - 1, int(std::floor(std::max({v[0].x, v[1].x, v[2].x}) + band)));
    int ymin = std::max(0, int(std::ceil(std::min({v[0].y, v[1].y, v[2].y}) - band)));
    int ymax = std::min(H - 1, int(std::floor(std::max({v[0].y, v[1].y, v[2].y}) + band)));
    for (int y = ymin; y <= ymax; ++y)
      for (int x = xmin; x <= xmax; ++x) {
        detail::EdgeDistance ed = detail::boundary_distance({double(x), double(y)}, v);
        double arg = clampd(ed.sign * ed.d * ed.d / gamma, -detail::kSigmoidArgCap,
                            detail::kSigmoidArgCap);
        out.log_escape.at(x, y, 0) += std::log1p(-sigmoid(arg));
      }
  }

  out.value = Image(W, H, 1);
  for (size_t i = 0; i < out.value.data.size(); ++i)
    out.value.data[i] = 1.0 - std::exp(out.log_escape.data[i]);
  return out;
}

// Gradient of the soft silhouette wrt world vertex positions, chained
// through the projection. Accumulates into dL_dvertices.
inline void soft_silhouette_adjoint(const TriangleMesh& mesh, const CameraView& cam,
                                    const SoftSilhouette& sil, const Image& dL_dS,
                                    double gamma, std::vector<Vec3>* dL_dvertices) {
  int W = sil.value.width, H = sil.value.height;
  if (dL_dS.width != W || dL_dS.height != H)
    throw std::runtime_error("soft_silhouette_adjoint: gradient buffer mismatch");

  auto pv = detail::project_vertices(mesh, cam);

  // per-vertex screen-space gradient, chained to 3D at the end
  std::vector<Vec2> d_screen(mesh.vertex_count(), Vec2{});

  for (size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.faces[f];
    const auto &a = pv[t[0]], &b = pv[t[1]], &c = pv[t[2]];
    if (!a.valid || !b.valid || !c.valid) continue;
    Vec2 v[3] = {a.screen, b.screen, c.screen};
    double band = detail::kSilhouetteBand;
    int xmin = std::max(0, int(std::ceil(std::min({v[0].x, v[1].x, v[2].x}) - band)));
    int xmax = std::min(W - 1, int(std::floor(std::max({v[0].x, v[1].x, v[2].x}) + band)));
    int ymin = std::max(0, int(std::ceil(std::min({v[0].y, v[1].y, v[2].y}) - band)));
    int ymax = std::min(H - 1, int(std::floor(std::max({v[0].y, v[1].y, v[2].y}) + band)));
    for (int y = ymin; y <= ymax; ++y)
      for (int x = xmin; x <= xmax; ++x) {
        double up = dL_dS.at(x, y, 0);
        if (up == 0) continue;
        detail::EdgeDistance ed = detail::boundary_distance({double(x), double(y)}, v);
        double arg = ed.sign * ed.d * ed.d / gamma;
        if (std::abs(arg) >= detail::kSigmoidArgCap) continue;  // saturated
        double sig = sigmoid(arg);
        // ds/dsigma_j = prod_{k != j} (1 - sigma_k)
        double others = std::exp(sil.log_escape.at(x, y, 0)) / (1.0 - sig);
        double dsig = up * others * sig * (1.0 - sig) * (ed.sign * 2.0 * ed.d / gamma);

        // d(d)/d(edge endpoints) at the fixed clamped parameter; the
        // closest point moves with the endpoints, p is fixed
        int e0 = ed.edge, e1 = (ed.edge + 1) % 3;
        Vec2 dd_da = ed.dir * (-(1.0 - ed.t));
        Vec2 dd_db = ed.dir * (-ed.t);
        d_screen[t[e0]] = d_screen[t[e0]] + dd_da * dsig;
        d_screen[t[e1]] = d_screen[t[e1]] + dd_db * dsig;
      }
  }

  for (size_t i = 0; i < mesh.vertex_count(); ++i) {
    if (!pv[i].valid) continue;
    if (d_screen[i].x == 0 && d_screen[i].y == 0) continue;
    Vec3 du, dv;
    detail::screen_jacobian(cam, mesh.vertices[i], &du, &dv);
    (*dL_dvertices)[i] += du * d_screen[i].x + dv * d_screen[i].y;
  }
}

}  // namespace meshforge
