#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meshforge/metrics.hpp"
#include "meshforge/pipeline.hpp"
#include "meshforge/synth.hpp"

using namespace meshforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mf_pipeline_" + name);
  fs::create_directories(p);
  return p;
}

// One small sphere dataset shared by the suite, generated once.
const fs::path& sphere_scene_dir() {
  static fs::path dir = [] {
    fs::path d = temp_dir("scene");
    if (!fs::exists(d / "cameras.json")) {
      SynthConfig cfg;
      cfg.base = "sphere";
      cfg.n_views = 8;
      cfg.n_heldout = 2;
      cfg.width = 64;
      cfg.height = 64;
      cfg.sdf_res = 64;
      make_synthetic_scene(cfg, d);
    }
    return d;
  }();
  return dir;
}

OptimConfig tiny_config() {
  OptimConfig cfg;
  cfg.coarse = {32, 1500, 2};
  cfg.fine = {64, 3000, 1};
  cfg.tex_res_coarse = 16;
  cfg.tex_res_fine = 32;
  cfg.seed = 3;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config file parsing applies overrides and keeps defaults") {
  fs::path p = temp_dir("cfg") / "ok.txt";
  {
    std::ofstream f(p);
    f << "# comment line\n";
    f << "coarse_grid_res = 64\n";
    f << "lambda_d=7.5   # trailing comment\n";
    f << "use_mask = false\n";
    f << "depth_loss_type = L2\n";
    f << "init_mode = sphere\n";
    f << "seed = 42\n";
  }
  OptimConfig c = load_config(p);
  CHECK(c.coarse.grid_res == 64);
  CHECK(c.weights.lambda_d == 7.5);
  CHECK(c.use_mask == false);
  CHECK(c.depth_loss_type == LossNorm::L2);
  CHECK(c.init_mode == "sphere");
  CHECK(c.seed == 42);
  // untouched defaults
  CHECK(c.fine.grid_res == 256);
  CHECK(c.coarse.n_points == 10000);
  CHECK(c.coarse.epochs == 150);
  CHECK(c.weights.lambda_c == 5.0);
  CHECK(c.weights.lambda_s == 10.0);
  CHECK(c.lr_points == 5e-4);
  CHECK(c.lr_texture == 1e-4);
  CHECK(c.lr_env == 1e-2);
  CHECK(c.sigma == 2.0);
  CHECK(c.gamma == 0.1);
  CHECK(c.resample_every == 50);
}

TEST_CASE("config rejects bad input") {
  OptimConfig c;
  CHECK_THROWS_AS(apply_config_entry(&c, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(&c, "use_mask", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(&c, "lambda_c", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(&c, "lambda_c", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(&c, "depth_loss_type", "L3"), ConfigError);

  OptimConfig bad;
  bad.coarse.grid_res = 100;  // not a power of two
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = OptimConfig{};
  bad.gamma = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = OptimConfig{};
  bad.init_mode = "cube";
  CHECK_THROWS_AS(validate_config(bad), ConfigError);

  CHECK_THROWS_AS(load_config(temp_dir("cfg") / "missing.txt"), ConfigError);
  fs::path garbled = temp_dir("cfg") / "garbled.txt";
  std::ofstream(garbled) << "this line has no equals sign\n";
  CHECK_THROWS_AS(load_config(garbled), ConfigError);
}

TEST_CASE("sphere initialization puts every point on the radius") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.init_mode = "sphere";
  cfg.coarse.n_points = 1000;
  Model m = initialize(&scene, cfg);
  REQUIRE(m.cloud.size() == 1000);
  Vec3 c{0.5, 0.5, 0.5};
  for (size_t i = 0; i < m.cloud.size(); ++i) {
    CHECK(norm(m.cloud.positions[i] - c) == doctest::Approx(0.3).epsilon(1e-12));
    // outward unit normals
    CHECK(norm(m.cloud.normals[i]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dot(m.cloud.normals[i], m.cloud.positions[i] - c) > 0.29);
  }
  CHECK(m.texture.res == cfg.tex_res_coarse);
  CHECK(m.envs.size() == 1);  // the synthetic rig shares one light
}

TEST_CASE("visual hull initialization lands near the ground truth") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  Model m = initialize(&scene, cfg);
  CHECK(m.cloud.size() == size_t(cfg.coarse.n_points));

  TriangleMesh gt = load_obj(sphere_scene_dir() / "gt_mesh.obj");
  Geometry g = build_geometry(m, cfg.sigma, cfg.coarse.grid_res);
  // hull carve runs at 128 cells over the domain box
  double voxel = norm(scene.domain_box.extent()) / std::sqrt(3.0) / 128.0;
  double cd = chamfer_distance(g.world, gt, 20000, 1);
  CHECK(cd < 2.0 * voxel);
}

TEST_CASE("visual hull initialization requires mask supervision") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.use_mask = false;
  CHECK_THROWS_AS(initialize(&scene, cfg), ConfigError);
}

TEST_CASE("zero-epoch optimization returns the initialization unchanged") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.coarse.epochs = 0;
  cfg.fine.epochs = 0;
  Model m = initialize(&scene, cfg);
  OrientedPointCloud before = m.cloud;
  fs::path out = temp_dir("zero");
  RunArtifacts art = optimize(scene, cfg, &m, out);
  CHECK(art.epochs_run == 0);
  REQUIRE(m.cloud.size() == before.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(norm(m.cloud.positions[i] - before.positions[i]) == 0.0);
    CHECK(norm(m.cloud.normals[i] - before.normals[i]) == 0.0);
  }
  // CSV holds only the header
  CHECK(slurp(out / "loss.csv") == "epoch, L_c, L_s, L_d, total\n");
}

TEST_CASE("short run reduces the loss and writes the artifacts") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.coarse.epochs = 3;
  cfg.fine.epochs = 0;
  Model m = initialize(&scene, cfg);
  fs::path out = temp_dir("short");
  RunArtifacts art = optimize(scene, cfg, &m, out);
  CHECK(art.epochs_run == 3);

  CHECK(fs::exists(out / "loss.csv"));
  CHECK(fs::exists(out / "mesh.obj"));
  CHECK(fs::exists(out / "texture.mftx"));
  CHECK(fs::exists(out / "cloud.bin"));
  CHECK(fs::exists(out / "env_000.pfm"));
  CHECK(fs::exists(out / "run.json"));

  // CSV: header + one row per epoch, loss down from epoch 1 to 3
  std::ifstream csv(out / "loss.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch, L_c, L_s, L_d, total");
  double first_total = 0, last_total = 0;
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    size_t comma = line.rfind(',');
    double total = std::stod(line.substr(comma + 1));
    if (rows == 1) first_total = total;
    last_total = total;
  }
  CHECK(rows == 3);
  CHECK(last_total < first_total);

  WatertightReport rep = watertight_check(art.final_mesh);
  CHECK(rep.is_watertight);
}

TEST_CASE("identical seed and config reproduce the run bit for bit") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.coarse.epochs = 2;
  cfg.fine.epochs = 0;
  fs::path out_a = temp_dir("det_a"), out_b = temp_dir("det_b");
  Model ma = initialize(&scene, cfg);
  optimize(scene, cfg, &ma, out_a);
  Model mb = initialize(&scene, cfg);
  optimize(scene, cfg, &mb, out_b);
  CHECK(slurp(out_a / "loss.csv") == slurp(out_b / "loss.csv"));
  CHECK(slurp(out_a / "mesh.obj") == slurp(out_b / "mesh.obj"));
}

TEST_CASE("stage transition keeps the loss bounded") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.coarse.epochs = 3;
  cfg.fine.epochs = 1;
  Model m = initialize(&scene, cfg);
  fs::path out = temp_dir("stage");
  optimize(scene, cfg, &m, out);
  CHECK(m.grid_res == cfg.fine.grid_res);
  CHECK(m.texture.res == cfg.tex_res_fine);
  CHECK(m.cloud.size() == size_t(cfg.fine.n_points));

  std::ifstream csv(out / "loss.csv");
  std::string line;
  std::getline(csv, line);
  std::vector<double> totals;
  while (std::getline(csv, line)) {
    size_t comma = line.rfind(',');
    totals.push_back(std::stod(line.substr(comma + 1)));
  }
  REQUIRE(totals.size() == 4);
  // first fine epoch (after upsample + resample) within 2x of the last
  // coarse epoch
  CHECK(totals[3] < 2.0 * totals[2]);
}

TEST_CASE("model save and load round trip") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  Model m = initialize(&scene, cfg);
  m.envs[0].set_radiance(1, 3, {2.0, 0.5, 1.0});
  fs::path dir = temp_dir("roundtrip");
  save_model(dir, m);
  Model r = load_model(dir);
  CHECK(r.grid_res == m.grid_res);
  CHECK(norm(r.domain_box.min - m.domain_box.min) == 0.0);
  CHECK(norm(r.domain_box.max - m.domain_box.max) == 0.0);
  REQUIRE(r.cloud.size() == m.cloud.size());
  CHECK(norm(r.cloud.positions[7] - m.cloud.positions[7]) == 0.0);
  CHECK(r.texture.res == m.texture.res);
  REQUIRE(r.envs.size() == 1);
  // env PFM stores f32 radiance
  Vec3 L = r.envs[0].radiance(1, 3);
  CHECK(L.x == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(L.y == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("nearest training view supplies the environment for novel cameras") {
  Scene scene = load_scene(sphere_scene_dir());
  // a camera sitting exactly on view 3's center must pick view 3's env
  CameraView probe = scene.views[3];
  scene.views[3].env_index = 5;
  CHECK(nearest_env_index(scene, probe) == 5);
}

TEST_CASE("forward rendering is silhouette consistent") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  Model m = initialize(&scene, cfg);
  Geometry g = build_geometry(m, cfg.sigma, cfg.coarse.grid_res);
  RenderResult r = render_mesh(m, g.world, scene.views[0], 0);
  int covered = 0;
  for (size_t i = 0; i < r.coverage.data.size(); ++i) {
    if (r.coverage.data[i] == 0.0) {
      // background stays black
      CHECK(r.image.data[3 * i] == 0.0);
    } else {
      ++covered;
      CHECK(std::isfinite(r.image.data[3 * i]));
    }
  }
  CHECK(covered > 100);
  CHECK_THROWS_AS(render_mesh(m, g.world, scene.views[0], 9), DataError);
}

TEST_CASE("non-finite parameters abort with a checkpoint and epoch context") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.coarse.epochs = 1;
  cfg.fine.epochs = 0;
  Model m = initialize(&scene, cfg);
  for (double& v : m.texture.raw) v = std::nan("");
  fs::path out = temp_dir("abort");
  fs::remove_all(out / "checkpoints");
  try {
    optimize(scene, cfg, &m, out);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
  CHECK(fs::exists(out / "checkpoints" / "abort" / "cloud.bin"));
}

TEST_CASE("synthetic masks equal the rasterized coverage of the mesh") {
  Scene scene = load_scene(sphere_scene_dir());
  TriangleMesh gt = load_obj(sphere_scene_dir() / "gt_mesh.obj");
  const CameraView& cam = scene.views[0];
  std::vector<double> attrs(gt.vertex_count(), 0.0);
  GBuffer gb = rasterize(gt, attrs, 1, cam, cam.width, cam.height);
  for (size_t i = 0; i < gb.coverage.data.size(); ++i)
    CHECK(cam.mask.data[i] == gb.coverage.data[i]);
}

TEST_CASE("synthetic cameras look at the object and depths match the sphere") {
  Scene scene = load_scene(sphere_scene_dir());
  for (const CameraView& cam : scene.views) {
    // optical axis through the origin
    Vec3 eye = cam.world_to_camera.center();
    Vec3 axis = cam.world_to_camera.R.row(2);
    CHECK(dot(axis, Vec3{} - eye) == doctest::Approx(norm(eye)).epsilon(1e-9));
  }
  // analytic ray-sphere depth at covered pixels (radius 0.35 at origin)
  const CameraView& cam = scene.views[0];
  Vec3 eye = cam.world_to_camera.center();
  Mat3 Rt = cam.world_to_camera.R.transposed();
  int checked = 0;
  for (int y = 10; y < cam.height - 10; y += 7)
    for (int x = 10; x < cam.width - 10; x += 7) {
      if (cam.depth_valid.at(x, y, 0) != 1.0 || cam.mask.at(x, y, 0) != 1.0) continue;
      Vec3 dir_cam{(x - cam.cx()) / cam.fx(), (y - cam.cy()) / cam.fy(), 1.0};
      Vec3 dir = Rt * dir_cam;  // unnormalized, z_cam = t along this ray
      double a = dot(dir, dir), b = 2.0 * dot(eye, dir), c = dot(eye, eye) - 0.35 * 0.35;
      double disc = b * b - 4 * a * c;
      if (disc <= 0) continue;
      double t = (-b - std::sqrt(disc)) / (2 * a);
      CHECK(cam.depth.at(x, y, 0) == doctest::Approx(t).epsilon(0.02));
      ++checked;
    }
  CHECK(checked > 10);
}

TEST_CASE("held-out split loads as a scene of its own") {
  Scene held = load_scene(sphere_scene_dir() / "heldout");
  CHECK(held.views.size() == 2);
  CHECK(held.domain_box_from_file);
}

TEST_CASE("domain box is derived from the silhouettes when absent") {
  // strip the domain_box entry from a copy of the dataset json
  fs::path dir = temp_dir("nobox");
  fs::copy(sphere_scene_dir(), dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  nlohmann::json j;
  std::ifstream(dir / "cameras.json") >> j;
  Box3 original;
  for (int c = 0; c < 3; ++c) {
    original.min[c] = j["domain_box"]["min"].at(c).get<double>();
    original.max[c] = j["domain_box"]["max"].at(c).get<double>();
  }
  j.erase("domain_box");
  std::ofstream(dir / "cameras.json") << j.dump(2);

  Scene scene = load_scene(dir);
  CHECK(!scene.domain_box_from_file);
  derive_domain_box(&scene);
  // derived cube contains the object (radius 0.35 at the origin) snugly
  for (int c = 0; c < 3; ++c) {
    CHECK(scene.domain_box.min[c] < -0.35);
    CHECK(scene.domain_box.max[c] > 0.35);
    CHECK(scene.domain_box.min[c] > -0.8);
    CHECK(scene.domain_box.max[c] < 0.8);
  }
  Vec3 e = scene.domain_box.extent();
  CHECK(e.x == doctest::Approx(e.y).epsilon(1e-12));
  CHECK(e.x == doctest::Approx(e.z).epsilon(1e-12));
}

TEST_CASE("optimizing without masks skips the silhouette term") {
  Scene scene = load_scene(sphere_scene_dir());
  OptimConfig cfg = tiny_config();
  cfg.use_mask = false;
  cfg.init_mode = "sphere";
  cfg.coarse.epochs = 1;
  cfg.fine.epochs = 0;
  Model m = initialize(&scene, cfg);
  fs::path out = temp_dir("nomask");
  optimize(scene, cfg, &m, out);
  std::ifstream csv(out / "loss.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  // L_s column is identically zero
  std::stringstream ss(row);
  std::string epoch, lc, ls;
  std::getline(ss, epoch, ',');
  std::getline(ss, lc, ',');
  std::getline(ss, ls, ',');
  CHECK(std::stod(ls) == 0.0);
}
