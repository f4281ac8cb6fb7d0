#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "meshforge/scene.hpp"

using namespace meshforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "meshforge_scene_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json identity_view(const std::string& image, double fx = 40, int w = 16, int h = 12) {
  json v;
  v["intrinsics"] = {{fx, 0.0, w / 2.0}, {0.0, fx, h / 2.0}, {0.0, 0.0, 1.0}};
  v["world_to_camera"] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 2}};
  v["image"] = image;
  return v;
}

void write_gray_png(const fs::path& p, int w, int h, double value, int channels = 3) {
  Image img(w, h, channels, value);
  write_png(p.string(), img, /*srgb=*/channels == 3);
}

void write_dataset(const fs::path& dir, json extra = json::object()) {
  write_gray_png(dir / "v0.png", 16, 12, 0.25);
  write_gray_png(dir / "v1.png", 16, 12, 0.75);
  json j;
  j["views"] = {identity_view("v0.png"), identity_view("v1.png")};
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream f(dir / "cameras.json");
  f << j.dump(2);
}

}  // namespace

TEST_CASE("valid two-view dataset loads with defaults") {
  fs::path dir = fresh_dir("ok");
  write_dataset(dir);
  Scene scene = load_scene(dir);
  REQUIRE(scene.views.size() == 2);
  const CameraView& v = scene.views[0];
  CHECK(v.width == 16);
  CHECK(v.height == 12);
  CHECK(v.fx() == doctest::Approx(40));
  CHECK(v.cx() == doctest::Approx(8));
  CHECK(v.image.at(3, 3, 1) == doctest::Approx(0.25).epsilon(0.01));  // decoded to linear
  // defaults: mask all ones, depth invalid everywhere
  for (double m : v.mask.data) CHECK(m == 1.0);
  for (double d : v.depth_valid.data) CHECK(d == 0.0);
  CHECK(!scene.domain_box_from_file);
  CHECK(scene.views[0].env_index == 0);
  CHECK(scene.views[1].env_index == 1);
}

TEST_CASE("masks binarize and depth pfm loads") {
  fs::path dir = fresh_dir("maskdepth");
  write_dataset(dir);
  // gray mask: 0.7 -> 1, 0.2 -> 0
  Image m(16, 12, 1, 0.7);
  m.at(0, 0, 0) = 0.2;
  write_png((dir / "m0.png").string(), m, false);
  Image d(16, 12, 1, 3.5);
  write_pfm((dir / "d0.pfm").string(), d);

  json j;
  json v0 = identity_view("v0.png");
  v0["mask"] = "m0.png";
  v0["depth"] = "d0.pfm";
  j["views"] = {v0, identity_view("v1.png")};
  std::ofstream((dir / "cameras.json")) << j.dump();

  Scene scene = load_scene(dir);
  CHECK(scene.views[0].mask.at(0, 0, 0) == 0.0);
  CHECK(scene.views[0].mask.at(5, 5, 0) == 1.0);
  CHECK(scene.views[0].depth.at(2, 2, 0) == doctest::Approx(3.5));
  // depth present without a valid map: valid everywhere
  for (double v : scene.views[0].depth_valid.data) CHECK(v == 1.0);
}

TEST_CASE("domain box parsing") {
  fs::path dir = fresh_dir("box");
  json extra;
  extra["domain_box"]["min"] = {-1.0, -2.0, -3.0};
  extra["domain_box"]["max"] = {1.0, 2.0, 3.0};
  write_dataset(dir, extra);
  Scene scene = load_scene(dir);
  CHECK(scene.domain_box_from_file);
  CHECK(scene.domain_box.min.y == doctest::Approx(-2));
  CHECK(scene.domain_box.max.z == doctest::Approx(3));

  fs::path bad = fresh_dir("badbox");
  json extra2;
  extra2["domain_box"]["min"] = {1.0, 0.0, 0.0};
  extra2["domain_box"]["max"] = {1.0, 2.0, 3.0};
  write_dataset(bad, extra2);
  CHECK_THROWS(load_scene(bad));
}

TEST_CASE("missing or garbled camera file") {
  fs::path dir = fresh_dir("missing");
  CHECK_THROWS(load_scene(dir));
  std::ofstream(dir / "cameras.json") << "{ not json";
  CHECK_THROWS_WITH_AS(load_scene(dir), doctest::Contains("garbled"), std::runtime_error);
}

TEST_CASE("fewer than two views is rejected") {
  fs::path dir = fresh_dir("one");
  write_gray_png(dir / "v0.png", 16, 12, 0.5);
  json j;
  j["views"] = {identity_view("v0.png")};
  std::ofstream(dir / "cameras.json") << j.dump();
  CHECK_THROWS(load_scene(dir));
}

TEST_CASE("invalid calibration is rejected") {
  fs::path dir = fresh_dir("badcal");
  write_gray_png(dir / "v0.png", 16, 12, 0.5);
  write_gray_png(dir / "v1.png", 16, 12, 0.5);

  json j;
  json bad = identity_view("v0.png");
  bad["intrinsics"][0][0] = -40.0;  // negative focal
  j["views"] = {bad, identity_view("v1.png")};
  std::ofstream(dir / "cameras.json") << j.dump();
  CHECK_THROWS_WITH_AS(load_scene(dir), doctest::Contains("focal"), std::runtime_error);

  json j2;
  json skew = identity_view("v0.png");
  skew["world_to_camera"][0][0] = 1.1;  // breaks orthonormality
  j2["views"] = {skew, identity_view("v1.png")};
  std::ofstream(dir / "cameras.json") << j2.dump();
  CHECK_THROWS_WITH_AS(load_scene(dir), doctest::Contains("orthonormal"), std::runtime_error);
}

TEST_CASE("projection math") {
  CameraView cam;
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = 100;
  cam.intrinsics(1, 1) = 100;
  cam.intrinsics(0, 2) = 32;
  cam.intrinsics(1, 2) = 24;
  cam.world_to_camera = {Mat3::identity(), {0, 0, 0}};
  cam.width = 64;
  cam.height = 48;

  Projection on_axis = project(cam, {0, 0, 2});
  CHECK(on_axis.u == doctest::Approx(32));
  CHECK(on_axis.v == doctest::Approx(24));
  CHECK(on_axis.z == doctest::Approx(2));
  CHECK(!on_axis.behind_camera);

  Projection off = project(cam, {0.5, -0.25, 2});
  CHECK(off.u == doctest::Approx(32 + 100 * 0.25));
  CHECK(off.v == doctest::Approx(24 - 100 * 0.125));

  CHECK(project(cam, {0, 0, -1}).behind_camera);
  CHECK(project(cam, {0, 0, 0}).behind_camera);
}
