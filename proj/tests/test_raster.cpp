#include <doctest.h>

#include <random>

#include "meshforge/raster.hpp"

using namespace meshforge;

namespace {

CameraView test_cam(int w = 64, int h = 48, double f = 40) {
  CameraView cam;
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = f;
  cam.intrinsics(1, 1) = f;
  cam.intrinsics(0, 2) = (w - 1) / 2.0;
  cam.intrinsics(1, 2) = (h - 1) / 2.0;
  cam.world_to_camera = {Mat3::identity(), {0, 0, 0}};
  cam.width = w;
  cam.height = h;
  return cam;
}

// large triangle at depth z facing the camera
TriangleMesh frontal_tri(double z = 2.0) {
  TriangleMesh m;
  m.vertices = {{-1.0, -0.8, z}, {1.0, -0.8, z}, {0.0, 1.0, z}};
  m.faces = {{0, 1, 2}};
  m.vertex_normals = {{0, 0, -1}, {0, 0, -1}, {0, 0, -1}};
  return m;
}

}  // namespace

TEST_CASE("frontal triangle: coverage, depth, interpolation") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  std::vector<double> attrs = {1.0, 10.0, 100.0};  // one channel per vertex
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);

  int cx = int(cam.cx()), cy = int(cam.cy());
  CHECK(gb.coverage.at(cx, cy, 0) == 1.0);
  CHECK(gb.depth.at(cx, cy, 0) == doctest::Approx(2.0));
  CHECK(gb.face_id[size_t(cy) * gb.width + cx] == 0);
  // corners project far outside the triangle
  CHECK(gb.coverage.at(0, 0, 0) == 0.0);
  CHECK(gb.face_id[0] == -1);

  // barycentrics sum to 1 and reproduce the attributes on covered pixels
  for (int y = 0; y < gb.height; ++y)
    for (int x = 0; x < gb.width; ++x) {
      if (gb.coverage.at(x, y, 0) == 0.0) continue;
      double s = gb.barycentrics.at(x, y, 0) + gb.barycentrics.at(x, y, 1) +
                 gb.barycentrics.at(x, y, 2);
      CHECK(s == doctest::Approx(1.0));
      double v = 0;
      for (int k = 0; k < 3; ++k) v += gb.barycentrics.at(x, y, k) * attrs[k];
      CHECK(gb.attributes.at(x, y, 0) == doctest::Approx(v));
      CHECK(gb.normals.at(x, y, 2) == doctest::Approx(-1.0));
    }
}

TEST_CASE("perspective-correct attributes on a slanted triangle") {
  CameraView cam = test_cam();
  TriangleMesh mesh;
  // plane z = 2 + x, attribute = world x
  mesh.vertices = {{-0.9, -1.2, 1.1}, {1.5, -1.2, 3.5}, {0.3, 1.4, 2.3}};
  mesh.faces = {{0, 1, 2}};
  std::vector<double> attrs = {-0.9, 1.5, 0.3};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);

  int covered = 0;
  for (int y = 0; y < gb.height; ++y)
    for (int x = 0; x < gb.width; ++x) {
      if (gb.coverage.at(x, y, 0) == 0.0) continue;
      ++covered;
      // ray through the pixel center meets z = 2 + x at
      // z = 2 / (1 - (x - cx)/fx)
      double dx = (x - cam.cx()) / cam.fx();
      double z_expect = 2.0 / (1.0 - dx);
      CHECK(gb.depth.at(x, y, 0) == doctest::Approx(z_expect).epsilon(1e-9));
      // world x at the hit equals attribute if interpolation is
      // perspective correct
      CHECK(gb.attributes.at(x, y, 0) == doctest::Approx(dx * z_expect).epsilon(1e-9));
    }
  CHECK(covered > 100);
}

TEST_CASE("z-buffer keeps the nearer face") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  TriangleMesh far = frontal_tri(3.0);
  mesh.vertices.insert(mesh.vertices.end(), far.vertices.begin(), far.vertices.end());
  mesh.faces.push_back({3, 4, 5});
  mesh.vertex_normals.clear();
  std::vector<double> attrs = {1, 1, 1, 2, 2, 2};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);
  int cx = int(cam.cx()), cy = int(cam.cy());
  CHECK(gb.depth.at(cx, cy, 0) == doctest::Approx(2.0));
  CHECK(gb.attributes.at(cx, cy, 0) == doctest::Approx(1.0));
  CHECK(gb.face_id[size_t(cy) * gb.width + cx] == 0);
}

TEST_CASE("faces with a vertex behind the camera are skipped") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  mesh.vertices[0].z = -1.0;
  std::vector<double> attrs = {1, 1, 1};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);
  for (double c : gb.coverage.data) CHECK(c == 0.0);
}

TEST_CASE("input validation") {
  CameraView cam = test_cam();
  TriangleMesh empty;
  std::vector<double> none;
  CHECK_THROWS(rasterize(empty, none, 1, cam, 8, 8));
  TriangleMesh mesh = frontal_tri();
  std::vector<double> wrong = {1, 2};
  CHECK_THROWS(rasterize(mesh, wrong, 1, cam, 8, 8));
  std::vector<double> ok = {1, 2, 3};
  CHECK_THROWS(rasterize(mesh, ok, 1, cam, 0, 8));
}

TEST_CASE("adjoint: attribute transpose is exact") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  std::vector<double> attrs = {0.3, -1.2, 2.5};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);

  Image up(gb.width, gb.height, 1);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : up.data) v = gauss(rng);

  std::vector<double> dattrs(attrs.size(), 0.0);
  raster_adjoint(gb, mesh, cam, &up, nullptr, &dattrs, nullptr);

  auto loss = [&](const std::vector<double>& a) {
    GBuffer g = rasterize(mesh, a, 1, cam, cam.width, cam.height);
    double s = 0;
    for (size_t i = 0; i < up.data.size(); ++i) s += up.data[i] * g.attributes.data[i];
    return s;
  };
  double h = 1e-6;
  for (size_t i = 0; i < attrs.size(); ++i) {
    auto ap = attrs, am = attrs;
    ap[i] += h;
    am[i] -= h;
    double num = (loss(ap) - loss(am)) / (2 * h);
    CHECK(num == doctest::Approx(dattrs[i]).epsilon(1e-6));
  }
}

TEST_CASE("adjoint: depth gradient moves vertices along camera z") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  std::vector<double> attrs = {0, 0, 0};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);

  // keep the upstream gradient away from the silhouette: boundary pixels can
  // lose coverage under the FD perturbation, which the fixed-topology
  // adjoint deliberately ignores
  Image dd(gb.width, gb.height, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int y = 2; y < gb.height - 2; ++y)
    for (int x = 2; x < gb.width - 2; ++x) {
      bool interior = true;
      for (int oy = -2; oy <= 2 && interior; ++oy)
        for (int ox = -2; ox <= 2 && interior; ++ox)
          if (gb.coverage.at(x + ox, y + oy, 0) == 0.0) interior = false;
      if (interior) dd.at(x, y, 0) = gauss(rng);
    }

  std::vector<Vec3> dverts(mesh.vertex_count(), Vec3{});
  raster_adjoint(gb, mesh, cam, nullptr, &dd, nullptr, &dverts);

  // translating the frontal triangle in z keeps barycentrics fixed, so the
  // finite difference matches the fixed-barycentric adjoint exactly
  auto loss = [&](double dz) {
    TriangleMesh m = mesh;
    for (Vec3& v : m.vertices) v.z += dz;
    GBuffer g = rasterize(m, attrs, 1, cam, cam.width, cam.height);
    double s = 0;
    for (size_t i = 0; i < dd.data.size(); ++i) s += dd.data[i] * g.depth.data[i];
    return s;
  };
  double h = 1e-6;
  double num = (loss(h) - loss(-h)) / (2 * h);
  double ana = dverts[0].z + dverts[1].z + dverts[2].z;
  CHECK(num == doctest::Approx(ana).epsilon(1e-7));
  // identity pose: no gradient in x/y from the depth path
  CHECK(dverts[0].x == 0.0);
  CHECK(dverts[0].y == 0.0);
}

TEST_CASE("soft silhouette: saturated inside, zero outside, half at the edge") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  double gamma = 0.5;
  SoftSilhouette sil = soft_silhouette(mesh, cam, cam.width, cam.height, gamma);

  std::vector<double> attrs = {0, 0, 0};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);
  int cx = int(cam.cx()), cy = int(cam.cy());
  CHECK(sil.value.at(cx, cy, 0) > 0.999);
  CHECK(sil.value.at(1, 1, 0) < 1e-6);

  // the bottom edge projects to a horizontal line; scan a column across it
  // and expect a value near 0.5 within a pixel of the hard boundary
  int col = cx;
  int hard_edge = -1;
  for (int y = cam.height - 1; y > 0; --y)
    if (gb.coverage.at(col, y, 0) == 1.0) { hard_edge = y; break; }
  REQUIRE(hard_edge > 0);
  double near_edge = sil.value.at(col, hard_edge, 0);
  double past_edge = sil.value.at(col, hard_edge + 1, 0);
  CHECK(near_edge > 0.5);
  CHECK(past_edge < 0.75);
  CHECK(near_edge > past_edge);
}

TEST_CASE("soft silhouette: larger gamma blurs farther") {
  CameraView cam = test_cam();
  TriangleMesh mesh = frontal_tri(2.0);
  SoftSilhouette tight = soft_silhouette(mesh, cam, cam.width, cam.height, 0.05);
  SoftSilhouette loose = soft_silhouette(mesh, cam, cam.width, cam.height, 2.0);

  std::vector<double> attrs = {0, 0, 0};
  GBuffer gb = rasterize(mesh, attrs, 1, cam, cam.width, cam.height);
  int cx = int(cam.cx());
  int hard_edge = -1;
  for (int y = cam.height - 1; y > 0; --y)
    if (gb.coverage.at(cx, y, 0) == 1.0) { hard_edge = y; break; }
  int outside = hard_edge + 2;
  CHECK(loose.value.at(cx, outside, 0) > tight.value.at(cx, outside, 0));
  // far from any edge the two agree with the hard mask
  CHECK(tight.value.at(cx, hard_edge - 8, 0) == doctest::Approx(1.0));
  CHECK(tight.value.at(cx, 2, 0) == doctest::Approx(0.0));
}

TEST_CASE("soft silhouette adjoint matches finite differences") {
  CameraView cam = test_cam(32, 24, 20);
  TriangleMesh mesh;
  mesh.vertices = {{-0.8, -0.7, 2.1}, {0.9, -0.5, 1.9}, {0.1, 0.8, 2.4}};
  mesh.faces = {{0, 1, 2}};
  double gamma = 0.7;

  Image up(32, 24, 1);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : up.data) v = gauss(rng);

  SoftSilhouette sil = soft_silhouette(mesh, cam, 32, 24, gamma);
  std::vector<Vec3> dverts(mesh.vertex_count(), Vec3{});
  soft_silhouette_adjoint(mesh, cam, sil, up, gamma, &dverts);

  auto loss = [&](const TriangleMesh& m) {
    SoftSilhouette s = soft_silhouette(m, cam, 32, 24, gamma);
    double v = 0;
    for (size_t i = 0; i < up.data.size(); ++i) v += up.data[i] * s.value.data[i];
    return v;
  };
  double h = 1e-6;
  for (size_t i = 0; i < mesh.vertex_count(); ++i)
    for (int d = 0; d < 3; ++d) {
      TriangleMesh mp = mesh, mm = mesh;
      mp.vertices[i][d] += h;
      mm.vertices[i][d] -= h;
      double num = (loss(mp) - loss(mm)) / (2 * h);
      CHECK(num == doctest::Approx(dverts[i][d]).epsilon(1e-3));
    }
}

TEST_CASE("soft silhouette input validation") {
  CameraView cam = test_cam();
  TriangleMesh empty;
  CHECK_THROWS(soft_silhouette(empty, cam, 8, 8, 0.5));
  TriangleMesh mesh = frontal_tri();
  CHECK_THROWS(soft_silhouette(mesh, cam, 8, 8, 0.0));
  CHECK_THROWS(soft_silhouette(mesh, cam, 8, 8, -1.0));
}
