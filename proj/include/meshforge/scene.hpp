// Calibrated multi-view dataset loading and the pinhole projection shared
// by every module. Camera convention: x-right / y-down / z-forward,
// pixel (i,j) centered at continuous coordinate (i,j).

#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshforge/image.hpp"
#include "meshforge/math.hpp"

namespace meshforge {

struct CameraView {
  Mat3 intrinsics = Mat3::identity();  // fx, fy on diagonal, cx, cy in last column
  RigidTransform world_to_camera;
  int width = 0, height = 0;
  Image image;       // H x W x 3, linear RGB
  Image mask;        // H x W x 1, {0,1}
  Image depth;       // H x W x 1, metric
  Image depth_valid; // H x W x 1, {0,1}
  int env_index = 0;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }
};

struct Projection {
  double u = 0, v = 0, z = 0;
  bool behind_camera = false;
};

inline Projection project(const CameraView& cam, const Vec3& p) {
  Vec3 xc = cam.world_to_camera.apply(p);
  Projection pr;
  pr.z = xc.z;
  if (xc.z <= 0) {
    pr.behind_camera = true;
    return pr;
  }
  pr.u = cam.fx() * xc.x / xc.z + cam.cx();
  pr.v = cam.fy() * xc.y / xc.z + cam.cy();
  return pr;
}

struct Scene {
  std::vector<CameraView> views;
  Box3 domain_box;
  bool domain_box_from_file = false;
};

namespace detail {

inline Mat3 parse_mat3(const nlohmann::json& j) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

inline void validate_view(const CameraView& v, size_t index) {
  auto fail = [index](const std::string& msg) {
    throw std::runtime_error("view " + std::to_string(index) + ": " + msg);
  };
  if (v.fx() <= 0 || v.fy() <= 0) fail("focal lengths must be positive");
  double oerr = orthonormality_error(v.world_to_camera.R);
  if (oerr >= 1e-4) fail("rotation not orthonormal (error " + std::to_string(oerr) + ")");
  if (v.world_to_camera.R.det() <= 0) fail("rotation must have det +1");
  auto check_dims = [&](const Image& img, const char* name) {
    if (img.width != v.width || img.height != v.height)
      fail(std::string(name) + " dimensions disagree with declared width/height");
  };
  check_dims(v.image, "image");
  check_dims(v.mask, "mask");
  check_dims(v.depth, "depth");
  check_dims(v.depth_valid, "valid");
  for (size_t i = 0; i < v.mask.data.size(); ++i) {
    double m = v.mask.data[i];
    if (m != 0.0 && m != 1.0) fail("mask values must be binary");
  }
  for (size_t i = 0; i < v.depth.data.size(); ++i)
    if (v.depth_valid.data[i] != 0.0 && v.depth.data[i] < 0) fail("negative depth where valid");
}

}  // namespace detail

// Loads `cameras.json` plus the referenced images/masks/depths. Missing
// masks default to all-ones; missing depths to valid = all-zeros.
inline Scene load_scene(const std::filesystem::path& dataset_dir) {
  namespace fs = std::filesystem;
  fs::path camera_file = dataset_dir / "cameras.json";
  std::ifstream f(camera_file);
  if (!f) throw std::runtime_error("load_scene: missing " + camera_file.string());

  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_scene: garbled camera file: " + std::string(e.what()));
  }

  Scene scene;
  const auto& views = j.at("views");
  if (views.size() < 2) throw std::runtime_error("load_scene: at least 2 views required");

  for (size_t i = 0; i < views.size(); ++i) {
    const auto& jv = views[i];
    CameraView v;
    v.intrinsics = detail::parse_mat3(jv.at("intrinsics"));
    const auto& w2c = jv.at("world_to_camera");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) v.world_to_camera.R(r, c) = w2c.at(r).at(c).get<double>();
      v.world_to_camera.t[r] = w2c.at(r).at(3).get<double>();
    }
    v.env_index = jv.value("env_index", int(i));

    v.image = read_png((dataset_dir / jv.at("image").get<std::string>()).string(), /*srgb=*/true);
    v.width = v.image.width;
    v.height = v.image.height;

    if (jv.contains("mask") && fs::exists(dataset_dir / jv["mask"].get<std::string>())) {
      Image m = read_png((dataset_dir / jv["mask"].get<std::string>()).string(), /*srgb=*/false);
      v.mask = Image(m.width, m.height, 1);
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) v.mask.at(x, y, 0) = m.at(x, y, 0) >= 0.5 ? 1.0 : 0.0;
    } else {
      v.mask = Image(v.width, v.height, 1, 1.0);
    }

    if (jv.contains("depth") && fs::exists(dataset_dir / jv["depth"].get<std::string>())) {
      v.depth = read_pfm((dataset_dir / jv["depth"].get<std::string>()).string());
      if (jv.contains("valid") && fs::exists(dataset_dir / jv["valid"].get<std::string>())) {
        Image m = read_png((dataset_dir / jv["valid"].get<std::string>()).string(), false);
        v.depth_valid = Image(m.width, m.height, 1);
        for (int y = 0; y < m.height; ++y)
          for (int x = 0; x < m.width; ++x)
            v.depth_valid.at(x, y, 0) = m.at(x, y, 0) >= 0.5 ? 1.0 : 0.0;
      } else {
        v.depth_valid = Image(v.depth.width, v.depth.height, 1, 1.0);
      }
    } else {
      v.depth = Image(v.width, v.height, 1, 0.0);
      v.depth_valid = Image(v.width, v.height, 1, 0.0);
    }

    detail::validate_view(v, i);
    scene.views.push_back(std::move(v));
  }

  if (j.contains("domain_box")) {
    for (int c = 0; c < 3; ++c) {
      scene.domain_box.min[c] = j["domain_box"]["min"].at(c).get<double>();
      scene.domain_box.max[c] = j["domain_box"]["max"].at(c).get<double>();
    }
    scene.domain_box_from_file = true;
    Vec3 e = scene.domain_box.extent();
    if (e.x <= 0 || e.y <= 0 || e.z <= 0)
      throw std::runtime_error("load_scene: domain_box must have positive extent");
  }
  return scene;
}

}  // namespace meshforge
