// Synthetic dataset generator: analytic shapes, procedural reflectance and
// lighting, rendered to a calibrated multi-view dataset with this
// repository's own rasterizer and shading (supersampled for the color
// images). The ground-truth mesh and environment are written alongside
// for evaluation.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "meshforge/iso.hpp"
#include "meshforge/obj_io.hpp"
#include "meshforge/pbr.hpp"
#include "meshforge/raster.hpp"
#include "meshforge/scene.hpp"

namespace meshforge {

struct SynthConfig {
  std::string base = "bumpy_sphere";        // sphere | bumpy_sphere | cube | two_blobs
  std::string texture_pattern = "stripes";  // stripes | checker | plain
  std::string env_pattern = "sky";          // sky | uniform | point
  int n_views = 24;
  int n_heldout = 4;
  int width = 256, height = 256;
  int supersample = 4;
  int sdf_res = 160;  // grid resolution for extracting the ground-truth mesh
  uint64_t seed = 0;
};

namespace detail {

inline double smooth_min(double a, double b, double k) {
  double h = clampd(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + (a - b) * h - k * h * (1.0 - h);
}

// World-space implicit field (negative inside); shapes fit in |p| < 0.5.
inline std::function<double(const Vec3&)> base_field(const std::string& base) {
  if (base == "sphere") {
    return [](const Vec3& p) { return norm(p) - 0.35; };
  }
  if (base == "bumpy_sphere") {
    return [](const Vec3& p) {
      double r = norm(p);
      if (r < 1e-9) return -0.35;
      Vec3 d = p / r;
      double bump = std::sin(6.0 * d.x + 1.0) * std::sin(6.0 * d.y + 2.0) +
                    0.6 * std::sin(8.0 * d.z);
      return r - (0.33 + 0.03 * bump);
    };
  }
  if (base == "cube") {
    return [](const Vec3& p) {
      Vec3 q{std::abs(p.x) - 0.28, std::abs(p.y) - 0.28, std::abs(p.z) - 0.28};
      Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
      return norm(outside) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
    };
  }
  if (base == "two_blobs") {
    return [](const Vec3& p) {
      double a = norm(p - Vec3{0.17, 0.0, 0.0}) - 0.24;
      double b = norm(p + Vec3{0.17, 0.02, 0.0}) - 0.26;
      return smooth_min(a, b, 0.08);
    };
  }
  throw std::runtime_error("make_synthetic_scene: unknown base shape '" + base + "'");
}

// Analytic reflectance at a world point.
inline BrdfParams texture_field(const std::string& pattern, const Vec3& p) {
  BrdfParams params;
  params.a_s = {0.04, 0.04, 0.04};
  if (pattern == "plain") {
    params.a_d = {0.62, 0.52, 0.42};
    params.alpha = 0.45;
  } else if (pattern == "checker") {
    auto cell = [](double v) { return int(std::floor(v * 6.0 + 120.0)) % 2; };
    bool odd = (cell(p.x) + cell(p.y) + cell(p.z)) % 2 == 1;
    params.a_d = odd ? Vec3{0.75, 0.7, 0.25} : Vec3{0.25, 0.3, 0.7};
    params.alpha = odd ? 0.25 : 0.6;
  } else if (pattern == "stripes") {
    params.a_d = {clampd(0.55 + 0.3 * std::sin(14.0 * p.x), 0.05, 0.95),
                  clampd(0.45 + 0.3 * std::sin(14.0 * p.y + 1.3), 0.05, 0.95),
                  clampd(0.5 + 0.3 * std::sin(14.0 * p.z + 2.1), 0.05, 0.95)};
    params.alpha = 0.35 + 0.15 * std::sin(9.0 * (p.x + p.y));
  } else {
    throw std::runtime_error("make_synthetic_scene: unknown texture pattern '" + pattern + "'");
  }
  return params;
}

inline EnvironmentMap make_env(const std::string& pattern) {
  EnvironmentMap env(4, 8);
  if (pattern == "uniform") {
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 8; ++w) env.set_radiance(h, w, {1.0, 1.0, 1.0});
  } else if (pattern == "point") {
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 8; ++w) env.set_radiance(h, w, {0.2, 0.2, 0.2});
    env.set_radiance(0, 2, {8.0, 7.5, 7.0});
  } else if (pattern == "sky") {
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 8; ++w) {
        double up = env_texel_direction(h, w, 4, 8).dir.y;  // +1 at the top
        double t = 0.5 * (up + 1.0);
        double swing = 0.12 * std::sin(2.0 * M_PI * (w + 0.5) / 8.0);
        env.set_radiance(h, w, {0.25 + 1.15 * t + swing, 0.28 + 1.1 * t, 0.33 + 1.0 * t - swing});
      }
  } else {
    throw std::runtime_error("make_synthetic_scene: unknown env pattern '" + pattern + "'");
  }
  return env;
}

inline RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  Vec3 z = normalized(target - eye);
  Vec3 ref = std::abs(z.y) > 0.98 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  Vec3 x = normalized(cross(ref, z));
  Vec3 y = cross(z, x);
  Mat3 R;
  for (int c = 0; c < 3; ++c) {
    R(0, c) = x[c];
    R(1, c) = y[c];
    R(2, c) = z[c];
  }
  return {R, -(R * eye)};
}

inline CameraView synth_camera(const Vec3& eye, int w, int h) {
  CameraView cam;
  double f = 1.45 * std::max(w, h);
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = (w - 1) / 2.0;
  cam.intrinsics(1, 2) = (h - 1) / 2.0;
  cam.world_to_camera = look_at(eye, {0, 0, 0});
  cam.width = w;
  cam.height = h;
  return cam;
}

// Ring + top ring camera layout around the origin.
inline std::vector<Vec3> camera_ring(int n_views, double radius, double phase) {
  std::vector<Vec3> eyes;
  int n_top = n_views / 3;
  int n_main = n_views - n_top;
  for (int i = 0; i < n_main; ++i) {
    double a = 2.0 * M_PI * i / n_main + phase;
    double elev = 0.12;
    eyes.push_back({radius * std::cos(elev) * std::cos(a), radius * std::sin(elev),
                    radius * std::cos(elev) * std::sin(a)});
  }
  for (int i = 0; i < n_top; ++i) {
    double a = 2.0 * M_PI * i / std::max(1, n_top) + phase + 0.4;
    double elev = 0.75;
    eyes.push_back({radius * std::cos(elev) * std::cos(a), radius * std::sin(elev),
                    radius * std::cos(elev) * std::sin(a)});
  }
  return eyes;
}

struct SynthRender {
  Image image, mask, depth, valid;
};

// Color at 4x supersampling, mask/depth at native pixel centers from the
// same rasterizer.
inline SynthRender render_gt(const TriangleMesh& world_mesh, const CameraView& cam,
                             const SynthConfig& cfg, const EnvironmentMap& env) {
  SynthRender out;
  int W = cam.width, H = cam.height, S = cfg.supersample;

  // attributes: world position (3)
  std::vector<double> attrs(world_mesh.vertex_count() * 3);
  for (size_t i = 0; i < world_mesh.vertex_count(); ++i)
    for (int d = 0; d < 3; ++d) attrs[i * 3 + d] = world_mesh.vertices[i][d];

  CameraView super = cam;
  super.width = W * S;
  super.height = H * S;
  super.intrinsics(0, 0) *= S;
  super.intrinsics(1, 1) *= S;
  super.intrinsics(0, 2) = S * cam.cx() + (S - 1) / 2.0;
  super.intrinsics(1, 2) = S * cam.cy() + (S - 1) / 2.0;

  GBuffer gs = rasterize(world_mesh, attrs, 3, super, super.width, super.height);
  Vec3 eye = cam.world_to_camera.center();

  out.image = Image(W, H, 3);
  double inv_s2 = 1.0 / double(S * S);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      Vec3 acc{};
      for (int sy = 0; sy < S; ++sy)
        for (int sx = 0; sx < S; ++sx) {
          int xs = x * S + sx, ys = y * S + sy;
          if (gs.coverage.at(xs, ys, 0) == 0.0) continue;
          Vec3 pos{gs.attributes.at(xs, ys, 0), gs.attributes.at(xs, ys, 1),
                   gs.attributes.at(xs, ys, 2)};
          Vec3 n{gs.normals.at(xs, ys, 0), gs.normals.at(xs, ys, 1), gs.normals.at(xs, ys, 2)};
          Vec3 wo = normalized(eye - pos);
          acc += shade_point(texture_field(cfg.texture_pattern, pos), n, wo, env);
        }
      acc *= inv_s2;
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = clampd(acc[c], 0.0, 1.0);
    }

  GBuffer gn = rasterize(world_mesh, attrs, 3, cam, W, H);
  out.mask = gn.coverage;
  out.depth = gn.depth;
  out.valid = gn.coverage;
  return out;
}

inline void write_view_files(const std::filesystem::path& dir, int index,
                             const SynthRender& r, nlohmann::json* jv) {
  namespace fs = std::filesystem;
  char name[32];
  std::snprintf(name, sizeof(name), "%03d", index);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "depths");
  std::string img = "images/" + std::string(name) + ".png";
  std::string mask = "masks/" + std::string(name) + ".png";
  std::string depth = "depths/" + std::string(name) + ".pfm";
  std::string valid = "depths/" + std::string(name) + "_valid.png";
  write_png((dir / img).string(), r.image, /*srgb=*/true);
  write_png((dir / mask).string(), r.mask, /*srgb=*/false);
  write_pfm((dir / depth).string(), r.depth);
  write_png((dir / valid).string(), r.valid, /*srgb=*/false);
  (*jv)["image"] = img;
  (*jv)["mask"] = mask;
  (*jv)["depth"] = depth;
  (*jv)["valid"] = valid;
}

inline nlohmann::json camera_json(const CameraView& cam) {
  nlohmann::json jv;
  for (int r = 0; r < 3; ++r) {
    nlohmann::json krow = nlohmann::json::array();
    nlohmann::json prow = nlohmann::json::array();
    for (int c = 0; c < 3; ++c) {
      krow.push_back(cam.intrinsics(r, c));
      prow.push_back(cam.world_to_camera.R(r, c));
    }
    prow.push_back(cam.world_to_camera.t[r]);
    jv["intrinsics"].push_back(krow);
    jv["world_to_camera"].push_back(prow);
  }
  return jv;
}

}  // namespace detail

// Ground-truth mesh of a config's base shape, in world coordinates.
inline TriangleMesh synth_gt_mesh(const SynthConfig& cfg, const Box3& box) {
  auto field = detail::base_field(cfg.base);
  int r = cfg.sdf_res;
  ScalarGrid g(r);
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        g.at(x, y, z) =
            field(box.to_world({double(x) / r, double(y) / r, double(z) / r}));
  TriangleMesh unit = marching_cubes(g, 0.0);
  TriangleMesh world = unit;
  for (size_t i = 0; i < world.vertex_count(); ++i)
    world.vertices[i] = box.to_world(unit.vertices[i]);
  // the box is a cube, so normals transfer unchanged
  return world;
}

// Writes the full dataset: cameras.json + images/masks/depths, a held-out
// split in heldout/, the ground-truth mesh and environment map.
inline void make_synthetic_scene(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.n_views < 2) throw std::runtime_error("make_synthetic_scene: need at least 2 views");
  if (cfg.n_heldout < 2) throw std::runtime_error("make_synthetic_scene: need at least 2 held-out views");
  fs::create_directories(out_dir);

  Box3 box{{-0.55, -0.55, -0.55}, {0.55, 0.55, 0.55}};
  TriangleMesh gt = synth_gt_mesh(cfg, box);
  EnvironmentMap env = detail::make_env(cfg.env_pattern);

  auto emit = [&](const fs::path& dir, const std::vector<Vec3>& eyes) {
    fs::create_directories(dir);
    nlohmann::json j;
    j["views"] = nlohmann::json::array();
    for (size_t i = 0; i < eyes.size(); ++i) {
      CameraView cam = detail::synth_camera(eyes[i], cfg.width, cfg.height);
      detail::SynthRender r = detail::render_gt(gt, cam, cfg, env);
      nlohmann::json jv = detail::camera_json(cam);
      jv["env_index"] = 0;  // one shared light rig
      detail::write_view_files(dir, int(i), r, &jv);
      j["views"].push_back(jv);
    }
    j["domain_box"]["min"] = {box.min.x, box.min.y, box.min.z};
    j["domain_box"]["max"] = {box.max.x, box.max.y, box.max.z};
    std::ofstream f(dir / "cameras.json");
    f << j.dump(2) << "\n";
  };

  emit(out_dir, detail::camera_ring(cfg.n_views, 1.6, 0.0));
  // held-out cameras sit between the training ones
  emit(out_dir / "heldout", detail::camera_ring(cfg.n_heldout, 1.6, 0.21));

  save_obj(out_dir / "gt_mesh.obj", gt);
  write_pfm((out_dir / "gt_env.pfm").string(), env_to_image(env));
}

}  // namespace meshforge
