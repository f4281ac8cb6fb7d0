// meshforge CLI: synthetic data generation, initialization, optimization,
// rendering, export, and evaluation. Exit codes: 0 ok, 2 config error,
// 3 data error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "meshforge/metrics.hpp"
#include "meshforge/pipeline.hpp"
#include "meshforge/synth.hpp"

namespace fs = std::filesystem;
using namespace meshforge;

namespace {

OptimConfig resolve_config(const std::string& config_path, bool seed_set, uint64_t seed) {
  OptimConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  if (seed_set) cfg.seed = seed;
  validate_config(cfg);
  return cfg;
}

int run_synth(const std::string& out, const SynthConfig& synth_cfg) {
  make_synthetic_scene(synth_cfg, out);
  std::cout << "wrote synthetic scene to " << out << "\n";
  return 0;
}

int run_init(const std::string& scene_dir, const std::string& out, const OptimConfig& cfg) {
  Scene scene = load_scene(scene_dir);
  Model m = initialize(&scene, cfg);
  save_model(out, m);
  Geometry g = build_geometry(m, cfg.sigma, cfg.coarse.grid_res);
  export_model_mesh(fs::path(out) / "mesh.obj", m, g);
  std::cout << "initialized " << m.cloud.size() << " points, mesh: " << g.world.vertex_count()
            << " vertices\n";
  return 0;
}

int run_optimize(const std::string& scene_dir, const std::string& out, const OptimConfig& cfg) {
  Scene scene = load_scene(scene_dir);
  Model m = initialize(&scene, cfg);
  RunArtifacts art = optimize(scene, cfg, &m, out);
  std::cout << "finished " << art.epochs_run << " epochs, final total loss "
            << art.final_total_loss << "\n";
  return 0;
}

int run_render(const std::string& model_dir, const std::string& scene_dir, const std::string& out,
               int view_index, bool heldout) {
  Model m = load_model(model_dir);
  Scene train = load_scene(scene_dir);
  Scene target = heldout ? load_scene(fs::path(scene_dir) / "heldout") : train;
  if (view_index < 0 || size_t(view_index) >= target.views.size())
    throw DataError("render: view index out of range");
  TriangleMesh mesh = load_obj(fs::path(model_dir) / "mesh.obj");
  const CameraView& cam = target.views[size_t(view_index)];
  int env = heldout ? nearest_env_index(train, cam) : cam.env_index;
  RenderResult r = render_mesh(m, mesh, cam, env);
  write_png(out, r.image, /*srgb=*/true);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_export(const std::string& model_dir, const std::string& out, double sigma) {
  Model m = load_model(model_dir);
  Geometry g = build_geometry(m, sigma, m.grid_res);
  export_model_mesh(out, m, g);
  std::cout << "exported " << g.world.vertex_count() << " vertices, " << g.world.face_count()
            << " faces to " << out << "\n";
  return 0;
}

int run_eval(const std::string& model_dir, const std::string& scene_dir, const std::string& out) {
  Model m = load_model(model_dir);
  Scene train = load_scene(scene_dir);
  TriangleMesh mesh = load_obj(fs::path(model_dir) / "mesh.obj");

  nlohmann::json report;
  fs::path gt_path = fs::path(scene_dir) / "gt_mesh.obj";
  if (fs::exists(gt_path)) {
    TriangleMesh gt = load_obj(gt_path);
    double cd = chamfer_distance(mesh, gt, 100000, 0);
    double diag = norm(m.domain_box.extent());
    report["chamfer"] = cd;
    report["chamfer_pct_of_diagonal"] = 100.0 * cd / diag;
    std::cout << "chamfer " << cd << " (" << 100.0 * cd / diag << "% of domain diagonal)\n";
  }

  fs::path heldout_dir = fs::path(scene_dir) / "heldout";
  if (fs::exists(heldout_dir / "cameras.json")) {
    Scene held = load_scene(heldout_dir);
    double sum = 0;
    for (const CameraView& cam : held.views) {
      RenderResult r = render_mesh(m, mesh, cam, nearest_env_index(train, cam));
      sum += psnr(r.image, cam.image);
    }
    double mean = sum / double(held.views.size());
    report["heldout_psnr"] = mean;
    std::cout << "held-out PSNR " << mean << " dB over " << held.views.size() << " views\n";
  }

  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw DataError("eval: cannot open " + out);
    f << report.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshforge: multi-view textured mesh recovery"};
  app.require_subcommand(1);

  std::string scene_dir, out, config_path, model_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "random seed (overrides the config)")
        ->each([&](const std::string&) { seed_set = true; });
  };

  SynthConfig synth_cfg;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--base", synth_cfg.base, "sphere|bumpy_sphere|cube|two_blobs");
  synth->add_option("--texture", synth_cfg.texture_pattern, "stripes|checker|plain");
  synth->add_option("--env", synth_cfg.env_pattern, "sky|uniform|point");
  synth->add_option("--views", synth_cfg.n_views, "training view count");
  synth->add_option("--heldout", synth_cfg.n_heldout, "held-out view count");
  synth->add_option("--width", synth_cfg.width, "image width");
  synth->add_option("--height", synth_cfg.height, "image height");
  synth->add_option("--sdf-res", synth_cfg.sdf_res, "ground-truth extraction resolution");
  synth->add_option("--seed", synth_cfg.seed, "random seed");

  CLI::App* init = app.add_subcommand("init", "initialize a model from a scene");
  init->add_option("--scene", scene_dir, "dataset directory")->required();
  init->add_option("--out", out, "output model directory")->required();
  init->add_option("--config", config_path, "key=value config file");
  add_seed(init);

  CLI::App* opt = app.add_subcommand("optimize", "run the full optimization");
  opt->add_option("--scene", scene_dir, "dataset directory")->required();
  opt->add_option("--out", out, "output run directory")->required();
  opt->add_option("--config", config_path, "key=value config file");
  add_seed(opt);

  int view_index = 0;
  bool heldout = false;
  CLI::App* render = app.add_subcommand("render", "render one view of a trained model");
  render->add_option("--model", model_dir, "trained run directory")->required();
  render->add_option("--scene", scene_dir, "dataset directory (cameras)")->required();
  render->add_option("--out", out, "output PNG path")->required();
  render->add_option("--view", view_index, "view index");
  render->add_flag("--heldout", heldout, "use the held-out camera split");

  double export_sigma = 2.0;
  CLI::App* exp = app.add_subcommand("export", "export the textured mesh");
  exp->add_option("--model", model_dir, "trained run directory")->required();
  exp->add_option("--out", out, "output OBJ path")->required();
  exp->add_option("--sigma", export_sigma, "solver bandwidth");

  CLI::App* eval = app.add_subcommand("eval", "evaluate against ground truth");
  eval->add_option("--model", model_dir, "trained run directory")->required();
  eval->add_option("--scene", scene_dir, "dataset directory")->required();
  eval->add_option("--out", out, "optional report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(out, synth_cfg);
    if (*init) return run_init(scene_dir, out, resolve_config(config_path, seed_set, seed));
    if (*opt) return run_optimize(scene_dir, out, resolve_config(config_path, seed_set, seed));
    if (*render) return run_render(model_dir, scene_dir, out, view_index, heldout);
    if (*exp) return run_export(model_dir, out, export_sigma);
    if (*eval) return run_eval(model_dir, scene_dir, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
