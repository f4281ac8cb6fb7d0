// Coarse-to-fine optimization loop tying the whole chain together:
// oriented points -> Poisson solve -> marching cubes -> rasterize ->
// shade, with losses back-propagated through every stage into per-view
// stochastic Adam updates on the points, the reflectance grid, and the
// per-view lights. Also: initialization, artifact (de)serialization,
// forward rendering of trained artifacts, and the plain key=value config.

#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshforge/iso.hpp"
#include "meshforge/losses.hpp"
#include "meshforge/obj_io.hpp"
#include "meshforge/pbr.hpp"
#include "meshforge/psr.hpp"
#include "meshforge/raster.hpp"
#include "meshforge/scene.hpp"
#include "meshforge/texgrid.hpp"
#include "meshforge/visualhull.hpp"

namespace meshforge {

// Error taxonomy mirrored by the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageConfig {
  int grid_res = 128;
  int n_points = 10000;
  int epochs = 150;
};

struct OptimConfig {
  StageConfig coarse{128, 10000, 150};
  StageConfig fine{256, 60000, 150};
  int resample_every = 50;
  int checkpoint_every = 50;
  int tex_res_coarse = 128;
  int tex_res_fine = 256;
  LossWeights weights;  // (5, 10, 30)
  double lr_points = 5e-4;
  double lr_texture = 1e-4;
  double lr_env = 1e-2;
  double sigma = 2.0;
  double gamma = 0.1;
  uint64_t seed = 0;
  std::string init_mode = "visual_hull";  // visual_hull | sphere
  bool use_mask = true;
  LossNorm depth_loss_type = LossNorm::L1;
  LossNorm silhouette_loss_type = LossNorm::L2;
};

namespace detail {

inline bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

inline LossNorm parse_norm(const std::string& v, const std::string& key) {
  if (v == "L1" || v == "l1") return LossNorm::L1;
  if (v == "L2" || v == "l2") return LossNorm::L2;
  throw ConfigError("config: bad loss norm for " + key + ": " + v);
}

}  // namespace detail

inline void validate_config(const OptimConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  for (int r : {c.coarse.grid_res, c.fine.grid_res, c.tex_res_coarse, c.tex_res_fine})
    if (!detail::power_of_two(r)) fail("resolutions must be powers of two");
  if (c.coarse.epochs < 0 || c.fine.epochs < 0) fail("epochs must be >= 0");
  if (c.coarse.n_points < 1 || c.fine.n_points < 1) fail("n_points must be >= 1");
  if (c.weights.lambda_c < 0 || c.weights.lambda_s < 0 || c.weights.lambda_d < 0)
    fail("loss weights must be >= 0");
  if (c.lr_points <= 0 || c.lr_texture <= 0 || c.lr_env <= 0) fail("learning rates must be > 0");
  if (c.sigma <= 0) fail("sigma must be > 0");
  if (c.gamma <= 0) fail("gamma must be > 0");
  if (c.resample_every < 1) fail("resample_every must be >= 1");
  if (c.checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (c.init_mode != "visual_hull" && c.init_mode != "sphere")
    fail("init_mode must be visual_hull or sphere");
}

inline void apply_config_entry(OptimConfig* c, const std::string& key, const std::string& value) {
  auto num = [&](double lo) {
    double v = 0;
    try {
      v = std::stod(value);
    } catch (...) {
      throw ConfigError("config: bad number for " + key + ": " + value);
    }
    if (v < lo) throw ConfigError("config: " + key + " out of range: " + value);
    return v;
  };
  if (key == "coarse_grid_res") c->coarse.grid_res = int(num(2));
  else if (key == "coarse_points") c->coarse.n_points = int(num(1));
  else if (key == "coarse_epochs") c->coarse.epochs = int(num(0));
  else if (key == "fine_grid_res") c->fine.grid_res = int(num(2));
  else if (key == "fine_points") c->fine.n_points = int(num(1));
  else if (key == "fine_epochs") c->fine.epochs = int(num(0));
  else if (key == "resample_every") c->resample_every = int(num(1));
  else if (key == "checkpoint_every") c->checkpoint_every = int(num(1));
  else if (key == "tex_res_coarse") c->tex_res_coarse = int(num(2));
  else if (key == "tex_res_fine") c->tex_res_fine = int(num(2));
  else if (key == "lambda_c") c->weights.lambda_c = num(0);
  else if (key == "lambda_s") c->weights.lambda_s = num(0);
  else if (key == "lambda_d") c->weights.lambda_d = num(0);
  else if (key == "lr_points") c->lr_points = num(0);
  else if (key == "lr_texture") c->lr_texture = num(0);
  else if (key == "lr_env") c->lr_env = num(0);
  else if (key == "sigma") c->sigma = num(0);
  else if (key == "gamma") c->gamma = num(0);
  else if (key == "seed") c->seed = uint64_t(num(0));
  else if (key == "init_mode") c->init_mode = value;
  else if (key == "use_mask") c->use_mask = detail::parse_bool(value, key);
  else if (key == "depth_loss_type") c->depth_loss_type = detail::parse_norm(value, key);
  else if (key == "silhouette_loss_type") c->silhouette_loss_type = detail::parse_norm(value, key);
  else throw ConfigError("config: unknown key: " + key);
}

// Plain key=value file; '#' starts a comment, blank lines ignored.
inline OptimConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  OptimConfig c;
  std::string line;
  while (std::getline(f, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got: " + line);
    apply_config_entry(&c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Model state

struct Model {
  OrientedPointCloud cloud;  // unit-cube coordinates
  TextureGrid texture;
  std::vector<EnvironmentMap> envs;  // indexed by CameraView::env_index
  Box3 domain_box;
  int grid_res = 0;  // resolution of the last geometry stage
};

// When the dataset carries no domain box, bootstrap one: a cube around
// the camera rig's look region, carved by the silhouettes, then the
// occupied bounds dilated 5% per side and re-cubed.
inline void derive_domain_box(Scene* scene) {
  if (scene->domain_box_from_file) return;
  Vec3 centroid{};
  for (const CameraView& v : scene->views) centroid += v.world_to_camera.center();
  centroid = centroid / double(scene->views.size());
  double mean_dist = 0;
  for (const CameraView& v : scene->views)
    mean_dist += norm(v.world_to_camera.center() - centroid);
  mean_dist /= double(scene->views.size());
  double half = 0.7 * mean_dist;
  scene->domain_box = {centroid - Vec3{half, half, half}, centroid + Vec3{half, half, half}};

  // carve the bootstrap cube; unlike the hull proper, a voxel that falls
  // outside any view's image is discarded (the object is assumed fully
  // framed in every view)
  int r = 64;
  OccupancyGrid occ(r, 1.0);
  Box3 tight = Box3::empty();
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        Vec3 world = scene->domain_box.to_world(occ.cell_center_unit(x, y, z));
        double o = 1.0;
        for (const CameraView& cam : scene->views) {
          Projection pr = project(cam, world);
          if (pr.behind_camera || pr.u < 0 || pr.u > cam.width - 1 || pr.v < 0 ||
              pr.v > cam.height - 1) {
            o = 0.0;
            break;
          }
          o = std::min(o, cam.mask.sample_bilinear(pr.u, pr.v, 0));
          if (o == 0.0) break;
        }
        if (o >= 0.5) tight.expand(world);
      }
  if (tight.min.x > tight.max.x)
    throw DataError("derive_domain_box: silhouettes carve away everything");
  Vec3 pad = tight.extent() * 0.05;
  tight.min -= pad;
  tight.max += pad;
  // re-cube so world->unit is an isotropic scale
  Vec3 c = (tight.min + tight.max) * 0.5;
  Vec3 e = tight.extent();
  double side = 0.5 * std::max({e.x, e.y, e.z});
  scene->domain_box = {c - Vec3{side, side, side}, c + Vec3{side, side, side}};
}

// Initial oriented point cloud: carved visual hull (mask datasets) or a
// centered sphere.
inline Model initialize(Scene* scene, const OptimConfig& cfg) {
  validate_config(cfg);
  derive_domain_box(scene);
  Model m;
  m.domain_box = scene->domain_box;
  m.grid_res = cfg.coarse.grid_res;
  m.texture = TextureGrid::neutral(cfg.tex_res_coarse);

  int n_env = 0;
  for (const CameraView& v : scene->views) n_env = std::max(n_env, v.env_index + 1);
  m.envs.assign(size_t(n_env), EnvironmentMap(4, 8));

  if (cfg.init_mode == "sphere") {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec3 c{0.5, 0.5, 0.5};
    for (int i = 0; i < cfg.coarse.n_points; ++i) {
      Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
      d = normalized(d);
      m.cloud.positions.push_back(c + d * 0.3);
      m.cloud.normals.push_back(d);
    }
  } else {
    if (!cfg.use_mask)
      throw ConfigError("initialize: visual_hull init requires masks; set init_mode=sphere");
    OccupancyGrid occ = carve_visual_hull(*scene, 128);  // carve resolution fixed
    TriangleMesh hull = hull_mesh(occ);
    m.cloud = resample_mesh(hull, size_t(cfg.coarse.n_points), cfg.seed);
  }
  m.cloud.renormalize(cfg.coarse.grid_res);
  return m;
}

// ---------------------------------------------------------------------------
// Geometry and forward rendering

struct Geometry {
  ScalarGrid phi;
  TriangleMesh unit;   // marching-cubes output with provenance
  TriangleMesh world;  // vertices mapped through the domain box
};

inline Geometry build_geometry(const Model& m, double sigma, int grid_res) {
  Geometry g;
  g.phi = psr_solve(m.cloud, PsrConfig{sigma, 0.5}, grid_res);
  // the periodic solve can ring up faint spurious sheets near the domain
  // edge; only the main surface is kept
  g.unit = largest_component(marching_cubes(g.phi, 0.0));
  g.world = g.unit;
  Vec3 ext = m.domain_box.extent();
  for (size_t i = 0; i < g.world.vertex_count(); ++i) {
    g.world.vertices[i] = m.domain_box.to_world(g.unit.vertices[i]);
    const Vec3& n = g.unit.vertex_normals[i];
    g.world.vertex_normals[i] = normalized({n.x / ext.x, n.y / ext.y, n.z / ext.z});
  }
  return g;
}

constexpr int kAttrChannels = kTexChannels + 3;  // reflectance + world position

// Per-vertex rasterization attributes: activated reflectance sampled at
// the unit-cube position, then the world position.
inline std::vector<double> vertex_attributes(const Model& m, const Geometry& g) {
  std::vector<double> attrs(g.world.vertex_count() * kAttrChannels);
  for (size_t i = 0; i < g.world.vertex_count(); ++i) {
    std::array<double, kTexChannels> p = tex_sample(m.texture, g.unit.vertices[i]);
    double* row = &attrs[i * kAttrChannels];
    for (int c = 0; c < kTexChannels; ++c) row[c] = p[c];
    for (int c = 0; c < 3; ++c) row[kTexChannels + c] = g.world.vertices[i][c];
  }
  return attrs;
}

inline BrdfParams pixel_params(const GBuffer& gb, int x, int y) {
  std::array<double, kTexChannels> p;
  for (int c = 0; c < kTexChannels; ++c) p[c] = gb.attributes.at(x, y, c);
  return params_from_texture(p);
}

// Shades every covered pixel of a g-buffer under one environment map.
inline Image shade_gbuffer(const GBuffer& gb, const CameraView& cam, const EnvironmentMap& env) {
  Image out(gb.width, gb.height, 3);
  Vec3 eye = cam.world_to_camera.center();
  for (int y = 0; y < gb.height; ++y)
    for (int x = 0; x < gb.width; ++x) {
      if (gb.coverage.at(x, y, 0) == 0.0) continue;
      Vec3 pos{gb.attributes.at(x, y, kTexChannels + 0), gb.attributes.at(x, y, kTexChannels + 1),
               gb.attributes.at(x, y, kTexChannels + 2)};
      Vec3 n{gb.normals.at(x, y, 0), gb.normals.at(x, y, 1), gb.normals.at(x, y, 2)};
      Vec3 lo = shade_point(pixel_params(gb, x, y), n, normalized(eye - pos), env);
      out.at(x, y, 0) = lo.x;
      out.at(x, y, 1) = lo.y;
      out.at(x, y, 2) = lo.z;
    }
  return out;
}

struct RenderResult {
  Image image;
  Image coverage;
  Image depth;
};

// Forward-only render of a world mesh with the trained reflectance and
// one environment map. No gradients.
inline RenderResult render_mesh(const Model& m, const TriangleMesh& world_mesh,
                                const CameraView& cam, int env_index) {
  if (env_index < 0 || size_t(env_index) >= m.envs.size())
    throw DataError("render_mesh: env index out of range");
  Geometry g;
  g.world = world_mesh;
  g.unit = world_mesh;
  for (size_t i = 0; i < g.unit.vertex_count(); ++i)
    g.unit.vertices[i] = m.domain_box.to_unit(world_mesh.vertices[i]);
  if (g.world.vertex_normals.size() != g.world.vertex_count()) {
    // area-weighted normals for meshes loaded without them
    g.world.vertex_normals.assign(g.world.vertex_count(), Vec3{});
    for (size_t f = 0; f < g.world.face_count(); ++f) {
      const auto& t = g.world.faces[f];
      Vec3 fn = cross(g.world.vertices[t[1]] - g.world.vertices[t[0]],
                      g.world.vertices[t[2]] - g.world.vertices[t[0]]);
      for (int k = 0; k < 3; ++k) g.world.vertex_normals[t[k]] += fn;
    }
    for (Vec3& n : g.world.vertex_normals) n = normalized(n);
  }
  std::vector<double> attrs = vertex_attributes(m, g);
  GBuffer gb = rasterize(g.world, attrs, kAttrChannels, cam, cam.width, cam.height);
  RenderResult r;
  r.image = shade_gbuffer(gb, cam, m.envs[size_t(env_index)]);
  r.coverage = gb.coverage;
  r.depth = gb.depth;
  return r;
}

// Env map for a novel camera: the nearest training view by camera-center
// distance.
inline int nearest_env_index(const Scene& scene, const CameraView& cam) {
  Vec3 c = cam.world_to_camera.center();
  int best = 0;
  double best_d = 1e300;
  for (const CameraView& v : scene.views) {
    double d = norm(v.world_to_camera.center() - c);
    if (d < best_d) {
      best_d = d;
      best = v.env_index;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// One stochastic step: forward, losses, full adjoint chain, Adam updates.

struct StepLosses {
  double c = 0, s = 0, d = 0, total = 0;
};

inline StepLosses optimize_step(Model* m, const OptimConfig& cfg, const CameraView& cam,
                                int grid_res, AdamState* adam_points, AdamState* adam_texture,
                                AdamState* adam_env) {
  const int W = cam.width, H = cam.height;
  Geometry g = build_geometry(*m, cfg.sigma, grid_res);
  size_t nv = g.world.vertex_count();
  std::vector<double> attrs = vertex_attributes(*m, g);
  GBuffer gb = rasterize(g.world, attrs, kAttrChannels, cam, W, H);
  EnvironmentMap& env = m->envs[size_t(cam.env_index)];
  Image pred = shade_gbuffer(gb, cam, env);
  Vec3 eye = cam.world_to_camera.center();

  // losses
  Image region(W, H, 1);
  for (size_t i = 0; i < region.data.size(); ++i) {
    double r = gb.coverage.data[i];
    if (cfg.use_mask) r *= cam.mask.data[i];
    region.data[i] = r;
  }
  LossResult photo = photometric_loss(cam.image, pred, region);
  LossResult depth =
      depth_loss(cam.depth, cam.depth_valid, gb.depth, gb.coverage, cfg.depth_loss_type);
  SoftSilhouette soft;
  LossResult sil;
  if (cfg.use_mask) {
    soft = soft_silhouette(g.world, cam, W, H, cfg.gamma);
    sil = silhouette_loss(cam.mask, soft.value, cfg.silhouette_loss_type);
  }

  StepLosses out;
  out.c = photo.value;
  out.s = sil.value;
  out.d = depth.value;
  out.total = total_loss(out.c, out.s, out.d, cfg.weights);

  // photometric adjoint: per-pixel shading backward into attribute and
  // env gradients. The normal and view-direction paths stop here.
  std::vector<Vec3> denv_raw(env.raw.size(), Vec3{});
  Image dattr(W, H, kAttrChannels);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (region.at(x, y, 0) != 1.0) continue;
      Vec3 up{cfg.weights.lambda_c * photo.grad.at(x, y, 0),
              cfg.weights.lambda_c * photo.grad.at(x, y, 1),
              cfg.weights.lambda_c * photo.grad.at(x, y, 2)};
      if (up.x == 0 && up.y == 0 && up.z == 0) continue;
      Vec3 pos{gb.attributes.at(x, y, kTexChannels + 0), gb.attributes.at(x, y, kTexChannels + 1),
               gb.attributes.at(x, y, kTexChannels + 2)};
      Vec3 n{gb.normals.at(x, y, 0), gb.normals.at(x, y, 1), gb.normals.at(x, y, 2)};
      ShadePointGrads sg =
          shade_point_adjoint(pixel_params(gb, x, y), n, normalized(eye - pos), env, up, &denv_raw);
      for (int c = 0; c < 3; ++c) {
        dattr.at(x, y, c) = sg.d_ad[c];
        dattr.at(x, y, 3 + c) = sg.d_as[c];
      }
      dattr.at(x, y, 6) = sg.d_alpha;
    }

  // raster transpose: attribute grads to vertices, depth grads to world
  // vertex positions
  Image ddepth(W, H, 1);
  for (size_t i = 0; i < ddepth.data.size(); ++i)
    ddepth.data[i] = cfg.weights.lambda_d * depth.grad.data[i];
  std::vector<double> dvattrs(nv * kAttrChannels, 0.0);
  std::vector<Vec3> dV_world(nv, Vec3{});
  raster_adjoint(gb, g.world, cam, &dattr, &ddepth, &dvattrs, &dV_world);

  if (cfg.use_mask) {
    Image dS(W, H, 1);
    for (size_t i = 0; i < dS.data.size(); ++i)
      dS.data[i] = cfg.weights.lambda_s * sil.grad.data[i];
    soft_silhouette_adjoint(g.world, cam, soft, dS, cfg.gamma, &dV_world);
  }

  // texture path: per-vertex reflectance grads back to the raw grid and
  // the unit-cube sampling positions
  std::vector<std::array<double, kTexChannels>> dvparams(nv);
  for (size_t i = 0; i < nv; ++i)
    for (int c = 0; c < kTexChannels; ++c) dvparams[i][c] = dvattrs[i * kAttrChannels + c];
  std::vector<double> dtex_raw;
  std::vector<Vec3> dV_tex;
  tex_sample_adjoint(m->texture, g.unit.vertices, dvparams, &dtex_raw, &dV_tex);

  // combine vertex grads in unit coordinates and push through MC + PSR
  Vec3 ext = m->domain_box.extent();
  std::vector<Vec3> dV_unit(nv);
  for (size_t i = 0; i < nv; ++i)
    dV_unit[i] = Vec3{dV_world[i].x * ext.x, dV_world[i].y * ext.y, dV_world[i].z * ext.z} +
                 dV_tex[i];
  ScalarGrid dphi = mc_backward(g.unit, dV_unit);
  std::vector<Vec3> dpos, dnrm;
  psr_solve_adjoint(m->cloud, PsrConfig{cfg.sigma, 0.5}, grid_res, dphi, &dpos, &dnrm);

  // Adam updates, one block at a time
  size_t k = m->cloud.size();
  std::vector<double> pts(6 * k), dpts(6 * k);
  for (size_t i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) {
      pts[6 * i + c] = m->cloud.positions[i][c];
      pts[6 * i + 3 + c] = m->cloud.normals[i][c];
      dpts[6 * i + c] = dpos[i][c];
      dpts[6 * i + 3 + c] = dnrm[i][c];
    }
  adam_step(&pts, dpts, adam_points, "points");
  for (size_t i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) {
      m->cloud.positions[i][c] = pts[6 * i + c];
      m->cloud.normals[i][c] = pts[6 * i + 3 + c];
    }
  m->cloud.renormalize(grid_res);

  adam_step(&m->texture.raw, dtex_raw, adam_texture, "texture");

  std::vector<double> envp(3 * env.raw.size()), denvp(3 * env.raw.size());
  for (size_t i = 0; i < env.raw.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      envp[3 * i + c] = env.raw[i][c];
      denvp[3 * i + c] = denv_raw[i][c];
    }
  adam_step(&envp, denvp, adam_env, "env");
  for (size_t i = 0; i < env.raw.size(); ++i)
    for (int c = 0; c < 3; ++c) env.raw[i][c] = envp[3 * i + c];

  return out;
}

// ---------------------------------------------------------------------------
// Artifact I/O

namespace detail {

inline void save_cloud(const std::filesystem::path& path, const OrientedPointCloud& cloud) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_cloud: cannot open " + path.string());
  f.write("MFPC", 4);
  uint64_t n = cloud.size();
  f.write(reinterpret_cast<const char*>(&n), 8);
  for (size_t i = 0; i < cloud.size(); ++i) {
    f.write(reinterpret_cast<const char*>(&cloud.positions[i].x), 24);
    f.write(reinterpret_cast<const char*>(&cloud.normals[i].x), 24);
  }
}

inline OrientedPointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_cloud: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "MFPC", 4) != 0) throw DataError("load_cloud: bad magic");
  uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  OrientedPointCloud cloud;
  cloud.positions.resize(n);
  cloud.normals.resize(n);
  for (size_t i = 0; i < n; ++i) {
    f.read(reinterpret_cast<char*>(&cloud.positions[i].x), 24);
    f.read(reinterpret_cast<char*>(&cloud.normals[i].x), 24);
  }
  if (!f) throw DataError("load_cloud: truncated file");
  return cloud;
}

inline std::string env_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "env_%03zu.pfm", i);
  return buf;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& dir, const Model& m) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  detail::save_cloud(dir / "cloud.bin", m.cloud);
  tex_save((dir / "texture.mftx").string(), m.texture);
  for (size_t i = 0; i < m.envs.size(); ++i)
    write_pfm((dir / detail::env_name(i)).string(), env_to_image(m.envs[i]));
  nlohmann::json j;
  j["domain_box"]["min"] = {m.domain_box.min.x, m.domain_box.min.y, m.domain_box.min.z};
  j["domain_box"]["max"] = {m.domain_box.max.x, m.domain_box.max.y, m.domain_box.max.z};
  j["grid_res"] = m.grid_res;
  j["env_count"] = m.envs.size();
  std::ofstream f(dir / "run.json");
  f << j.dump(2) << "\n";
}

inline Model load_model(const std::filesystem::path& dir) {
  std::ifstream f(dir / "run.json");
  if (!f) throw DataError("load_model: missing " + (dir / "run.json").string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_model: garbled run.json: " + std::string(e.what()));
  }
  Model m;
  for (int c = 0; c < 3; ++c) {
    m.domain_box.min[c] = j.at("domain_box").at("min").at(c).get<double>();
    m.domain_box.max[c] = j.at("domain_box").at("max").at(c).get<double>();
  }
  m.grid_res = j.at("grid_res").get<int>();
  m.cloud = detail::load_cloud(dir / "cloud.bin");
  m.texture = tex_load((dir / "texture.mftx").string());
  size_t n_env = j.at("env_count").get<size_t>();
  for (size_t i = 0; i < n_env; ++i)
    m.envs.push_back(env_from_image(read_pfm((dir / detail::env_name(i)).string())));
  return m;
}

// Textured OBJ export of the current geometry.
inline void export_model_mesh(const std::filesystem::path& obj_path, const Model& m,
                              const Geometry& g) {
  std::vector<std::array<double, kTexChannels>> params(g.world.vertex_count());
  for (size_t i = 0; i < g.world.vertex_count(); ++i)
    params[i] = tex_sample(m.texture, g.unit.vertices[i]);
  export_mesh(obj_path, g.world, params);
}

// ---------------------------------------------------------------------------
// The optimization loop

struct RunArtifacts {
  std::filesystem::path out_dir;
  TriangleMesh final_mesh;  // world coordinates
  double final_total_loss = 0;
  int epochs_run = 0;
};

namespace detail {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_checkpoint(const std::filesystem::path& dir, const Model& m,
                             const OptimConfig& cfg, int grid_res) {
  save_model(dir, m);
  Geometry g = build_geometry(m, cfg.sigma, grid_res);
  export_model_mesh(dir / "mesh.obj", m, g);
}

}  // namespace detail

// Runs the coarse-to-fine schedule; writes loss.csv, checkpoints, and the
// final artifacts under out_dir. A non-finite gradient aborts with a
// checkpoint and epoch context.
inline RunArtifacts optimize(const Scene& scene, const OptimConfig& cfg, Model* m,
                             const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  validate_config(cfg);
  for (const CameraView& v : scene.views)
    if (v.env_index < 0 || size_t(v.env_index) >= m->envs.size())
      throw DataError("optimize: view env_index out of range");
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "loss.csv");
  if (!csv) throw DataError("optimize: cannot open loss CSV");
  csv << "epoch, L_c, L_s, L_d, total\n";

  AdamState adam_points(cfg.lr_points);
  AdamState adam_texture(cfg.lr_texture);
  std::vector<AdamState> adam_envs(m->envs.size(), AdamState(cfg.lr_env));

  int total_epochs = cfg.coarse.epochs + cfg.fine.epochs;
  RunArtifacts art;
  art.out_dir = out_dir;

  auto resample = [&](const StageConfig& stage, uint64_t salt) {
    Geometry g = build_geometry(*m, cfg.sigma, stage.grid_res);
    m->cloud = resample_mesh(g.unit, size_t(stage.n_points), cfg.seed ^ salt);
    m->cloud.renormalize(stage.grid_res);
    adam_points.reset(0);  // moments restart with the new parameterization
  };

  int epoch = 0;
  try {
    for (epoch = 1; epoch <= total_epochs; ++epoch) {
      bool fine = epoch > cfg.coarse.epochs;
      const StageConfig& stage = fine ? cfg.fine : cfg.coarse;

      if (fine && epoch == cfg.coarse.epochs + 1) {
        // stage transition: resample at the fine budget on the fine grid,
        // upsample the reflectance grid
        resample(cfg.fine, 0x5747u);
        while (m->texture.res < cfg.tex_res_fine)
          m->texture = tex_upsample2(m->texture, size_t(cfg.tex_res_fine));
        adam_texture.reset(0);
      } else if (epoch > 1 && (epoch - 1) % cfg.resample_every == 0) {
        resample(stage, 0x9E55u + uint64_t(epoch));
      }
      m->grid_res = stage.grid_res;

      std::vector<size_t> order(scene.views.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + uint64_t(epoch));
      std::shuffle(order.begin(), order.end(), rng);

      StepLosses mean;
      for (size_t vi : order) {
        const CameraView& cam = scene.views[vi];
        StepLosses l = optimize_step(m, cfg, cam, stage.grid_res, &adam_points, &adam_texture,
                                     &adam_envs[size_t(cam.env_index)]);
        mean.c += l.c;
        mean.s += l.s;
        mean.d += l.d;
        mean.total += l.total;
      }
      double inv = 1.0 / double(scene.views.size());
      mean.c *= inv;
      mean.s *= inv;
      mean.d *= inv;
      mean.total *= inv;
      csv << epoch << ", " << detail::csv_num(mean.c) << ", " << detail::csv_num(mean.s) << ", "
          << detail::csv_num(mean.d) << ", " << detail::csv_num(mean.total) << "\n";
      csv.flush();
      art.final_total_loss = mean.total;
      art.epochs_run = epoch;

      if (epoch % cfg.checkpoint_every == 0 && epoch < total_epochs) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
        detail::write_checkpoint(out_dir / "checkpoints" / name, *m, cfg, stage.grid_res);
      }
    }
  } catch (const std::exception& e) {
    // best-effort state dump; the mesh export may itself be poisoned
    try {
      save_model(out_dir / "checkpoints" / "abort", *m);
    } catch (...) {
    }
    throw NumericError("optimize: aborted at epoch " + std::to_string(epoch) + ": " + e.what());
  }

  // final artifacts
  save_model(out_dir, *m);
  Geometry g = build_geometry(*m, cfg.sigma, m->grid_res);
  export_model_mesh(out_dir / "mesh.obj", *m, g);
  art.final_mesh = g.world;
  return art;
}

}  // namespace meshforge
