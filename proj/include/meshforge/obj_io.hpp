// OBJ/MTL export and import. Exported meshes carry per-vertex diffuse
// colors (OBJ vertex-color extension), a per-face-charted diffuse atlas,
// and auxiliary specular/roughness PNG channels.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshforge/image.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Plain OBJ without materials, used for ground-truth meshes and checkpoints.
inline void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_obj: cannot open " + path.string());
  for (const auto& v : mesh.vertices)
    f << "v " << detail::fmt_double(v.x) << " " << detail::fmt_double(v.y) << " "
      << detail::fmt_double(v.z) << "\n";
  for (const auto& n : mesh.vertex_normals)
    f << "vn " << detail::fmt_double(n.x) << " " << detail::fmt_double(n.y) << " "
      << detail::fmt_double(n.z) << "\n";
  bool has_n = mesh.vertex_normals.size() == mesh.vertices.size();
  for (const auto& t : mesh.faces) {
    if (has_n)
      f << "f " << t[0] + 1 << "//" << t[0] + 1 << " " << t[1] + 1 << "//" << t[1] + 1 << " "
        << t[2] + 1 << "//" << t[2] + 1 << "\n";
    else
      f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
}

inline TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_obj: cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      ss >> n.x >> n.y >> n.z;
      mesh.vertex_normals.push_back(n);
    } else if (tag == "f") {
      std::array<int, 3> face;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        face[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(face);
    }
  }
  return mesh;
}

// Textured export: OBJ + MTL + diffuse atlas + specular/roughness maps.
// per_vertex_params rows are (a_d rgb, a_s rgb, alpha). The atlas charts
// two triangles per square block of a fixed-size texture.
inline void export_mesh(const std::filesystem::path& obj_path, const TriangleMesh& mesh,
                        const std::vector<std::array<double, 7>>& per_vertex_params,
                        int atlas_size = 1024) {
  if (mesh.empty()) throw std::runtime_error("export_mesh: empty mesh");
  if (per_vertex_params.size() != mesh.vertex_count())
    throw std::runtime_error("export_mesh: per-vertex parameter count mismatch");

  namespace fs = std::filesystem;
  fs::path dir = obj_path.parent_path();
  std::string stem = obj_path.stem().string();
  fs::path mtl_path = dir / (stem + ".mtl");
  std::string diffuse_name = stem + "_diffuse.png";
  std::string specular_name = stem + "_specular.png";
  std::string rough_name = stem + "_roughness.png";

  size_t nfaces = mesh.face_count();
  size_t nblocks = (nfaces + 1) / 2;
  int grid = int(std::ceil(std::sqrt(double(nblocks))));
  double block_px = double(atlas_size) / grid;
  double inset = 1.0 / block_px;  // half-ish texel inset keeps charts from bleeding

  // per-face-corner uv coordinates
  std::vector<std::array<Vec2, 3>> uvs(nfaces);
  for (size_t fidx = 0; fidx < nfaces; ++fidx) {
    size_t block = fidx / 2;
    int bx = int(block % grid), by = int(block / grid);
    double u0 = (bx + inset) / grid, u1 = (bx + 1 - inset) / grid;
    double v0 = (by + inset) / grid, v1 = (by + 1 - inset) / grid;
    if (fidx % 2 == 0)
      uvs[fidx] = {Vec2{u0, v0}, Vec2{u1, v0}, Vec2{u0, v1}};
    else
      uvs[fidx] = {Vec2{u1, v1}, Vec2{u0, v1}, Vec2{u1, v0}};
  }

  // rasterize the charts
  Image diffuse(atlas_size, atlas_size, 3), specular(atlas_size, atlas_size, 3),
      rough(atlas_size, atlas_size, 1);
  for (size_t fidx = 0; fidx < nfaces; ++fidx) {
    const auto& t = mesh.faces[fidx];
    Vec2 a{uvs[fidx][0].x * atlas_size, uvs[fidx][0].y * atlas_size};
    Vec2 b{uvs[fidx][1].x * atlas_size, uvs[fidx][1].y * atlas_size};
    Vec2 c{uvs[fidx][2].x * atlas_size, uvs[fidx][2].y * atlas_size};
    int xmin = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}))) - 1);
    int xmax = std::min(atlas_size - 1, int(std::ceil(std::max({a.x, b.x, c.x}))) + 1);
    int ymin = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}))) - 1);
    int ymax = std::min(atlas_size - 1, int(std::ceil(std::max({a.y, b.y, c.y}))) + 1);
    double area = cross2(b - a, c - a);
    if (area == 0) continue;
    for (int y = ymin; y <= ymax; ++y)
      for (int x = xmin; x <= xmax; ++x) {
        Vec2 p{x + 0.5, y + 0.5};
        double w1 = cross2(p - a, c - a) / area;
        double w2 = cross2(b - a, p - a) / area;
        double w0 = 1.0 - w1 - w2;
        // clamp so every block texel gets a nearby face color
        w0 = clampd(w0, 0.0, 1.0);
        w1 = clampd(w1, 0.0, 1.0);
        w2 = clampd(w2, 0.0, 1.0);
        double ws = w0 + w1 + w2;
        if (ws <= 0) continue;
        w0 /= ws; w1 /= ws; w2 /= ws;
        // atlas rows follow v, with v=0 at the bottom per OBJ convention
        int py = atlas_size - 1 - y;
        for (int ch = 0; ch < 3; ++ch) {
          diffuse.at(x, py, ch) = w0 * per_vertex_params[t[0]][ch] +
                                  w1 * per_vertex_params[t[1]][ch] +
                                  w2 * per_vertex_params[t[2]][ch];
          specular.at(x, py, ch) = w0 * per_vertex_params[t[0]][3 + ch] +
                                   w1 * per_vertex_params[t[1]][3 + ch] +
                                   w2 * per_vertex_params[t[2]][3 + ch];
        }
        rough.at(x, py, 0) = w0 * per_vertex_params[t[0]][6] + w1 * per_vertex_params[t[1]][6] +
                             w2 * per_vertex_params[t[2]][6];
      }
  }
  write_png((dir / diffuse_name).string(), diffuse, /*srgb=*/true);
  write_png((dir / specular_name).string(), specular, /*srgb=*/true);
  write_png((dir / rough_name).string(), rough, /*srgb=*/false);

  {
    std::ofstream m(mtl_path);
    if (!m) throw std::runtime_error("export_mesh: cannot open " + mtl_path.string());
    m << "newmtl material0\nKa 0 0 0\nKd 1 1 1\nKs 1 1 1\nmap_Kd " << diffuse_name
      << "\nmap_Ks " << specular_name << "\n";
  }

  std::ofstream f(obj_path);
  if (!f) throw std::runtime_error("export_mesh: cannot open " + obj_path.string());
  f << "mtllib " << mtl_path.filename().string() << "\n";
  bool has_n = mesh.vertex_normals.size() == mesh.vertices.size();
  for (size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const auto& pp = per_vertex_params[i];
    f << "v " << detail::fmt_double(v.x) << " " << detail::fmt_double(v.y) << " "
      << detail::fmt_double(v.z) << " " << detail::fmt_double(pp[0]) << " "
      << detail::fmt_double(pp[1]) << " " << detail::fmt_double(pp[2]) << "\n";
  }
  for (const auto& n : mesh.vertex_normals)
    f << "vn " << detail::fmt_double(n.x) << " " << detail::fmt_double(n.y) << " "
      << detail::fmt_double(n.z) << "\n";
  for (size_t fidx = 0; fidx < nfaces; ++fidx)
    for (int k = 0; k < 3; ++k)
      f << "vt " << detail::fmt_double(uvs[fidx][k].x) << " " << detail::fmt_double(uvs[fidx][k].y)
        << "\n";
  f << "usemtl material0\n";
  for (size_t fidx = 0; fidx < nfaces; ++fidx) {
    const auto& t = mesh.faces[fidx];
    f << "f";
    for (int k = 0; k < 3; ++k) {
      f << " " << t[k] + 1 << "/" << fidx * 3 + k + 1;
      if (has_n) f << "/" << t[k] + 1;
    }
    f << "\n";
  }
}

}  // namespace meshforge
