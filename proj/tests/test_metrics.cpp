#include <doctest.h>

#include <cmath>

#include "meshforge/bvh.hpp"
#include "meshforge/iso.hpp"
#include "meshforge/metrics.hpp"

using namespace meshforge;

namespace {

TriangleMesh sphere_mesh(double radius, int r = 32) {
  ScalarGrid g(r);
  Vec3 center{0.5, 0.5, 0.5};
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        g.at(x, y, z) = norm(Vec3{double(x) / r, double(y) / r, double(z) / r} - center) - radius;
  return marching_cubes(g, 0.0);
}

TriangleMesh unit_square(double z) {
  TriangleMesh m;
  m.vertices = {{0, 0, z}, {1, 0, z}, {1, 1, z}, {0, 1, z}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("closest point on a triangle") {
  Vec3 a{0, 0, 0}, b{2, 0, 0}, c{0, 2, 0};
  CHECK(norm(closest_point_on_triangle({0.5, 0.5, 3}, a, b, c) - Vec3{0.5, 0.5, 0}) < 1e-14);
  CHECK(norm(closest_point_on_triangle({-1, -1, 0}, a, b, c) - a) < 1e-14);
  CHECK(norm(closest_point_on_triangle({3, 3, 0}, a, b, c) - Vec3{1, 1, 0}) < 1e-14);
  CHECK(norm(closest_point_on_triangle({1, -2, 0}, a, b, c) - Vec3{1, 0, 0}) < 1e-14);
}

TEST_CASE("bvh distance and containment on a sphere") {
  TriangleMesh mesh = sphere_mesh(0.3);
  TriangleBvh bvh(mesh);
  Vec3 center{0.5, 0.5, 0.5};
  // distances from the center approach the radius
  CHECK(bvh.distance(center) == doctest::Approx(0.3).epsilon(0.01));
  CHECK(bvh.distance({0.5, 0.5, 0.95}) == doctest::Approx(0.15).epsilon(0.05));
  CHECK(bvh.contains(center));
  CHECK(bvh.contains({0.5, 0.5, 0.75}));
  CHECK(!bvh.contains({0.5, 0.5, 0.85}));
  CHECK(!bvh.contains({0.02, 0.02, 0.02}));
}

TEST_CASE("bvh raycast hits the nearest surface") {
  TriangleMesh mesh = sphere_mesh(0.3);
  TriangleBvh bvh(mesh);
  double t = 0;
  REQUIRE(bvh.raycast({0.5, 0.5, 0.0}, {0, 0, 1}, &t));
  CHECK(t == doctest::Approx(0.2).epsilon(0.02));
  CHECK(!bvh.raycast({0.5, 0.5, 0.0}, {0, 0, -1}, &t));
}

TEST_CASE("chamfer of a mesh with itself is zero") {
  TriangleMesh mesh = sphere_mesh(0.3, 24);
  CHECK(chamfer_distance(mesh, mesh, 2000, 1) < 1e-12);
}

TEST_CASE("chamfer between parallel squares equals their separation") {
  TriangleMesh a = unit_square(0.0);
  TriangleMesh b = unit_square(0.25);
  CHECK(chamfer_distance(a, b, 5000, 3) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("chamfer between concentric spheres tracks the radius gap") {
  TriangleMesh a = sphere_mesh(0.20, 48);
  TriangleMesh b = sphere_mesh(0.30, 48);
  double d = chamfer_distance(a, b, 20000, 5);
  CHECK(d == doctest::Approx(0.10).epsilon(0.05));
  // symmetry up to sampling noise
  double rev = chamfer_distance(b, a, 20000, 5);
  CHECK(rev == doctest::Approx(d).epsilon(0.05));
}

TEST_CASE("chamfer input validation") {
  TriangleMesh empty;
  TriangleMesh ok = unit_square(0);
  CHECK_THROWS(chamfer_distance(empty, ok));
  CHECK_THROWS(chamfer_distance(ok, empty));
}

TEST_CASE("psnr oracle values") {
  Image a(4, 4, 3, 0.5), b(4, 4, 3, 0.5);
  CHECK(psnr(a, b) == kPsnrPerfect);
  for (double& v : b.data) v = 0.6;
  // mse = 0.01 -> 20 dB
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("psnr region mask") {
  Image a(2, 1, 1), b(2, 1, 1), region(2, 1, 1);
  a.data = {0.0, 0.0};
  b.data = {0.1, 0.9};
  region.data = {1.0, 0.0};
  CHECK(psnr(a, b, &region) == doctest::Approx(20.0).epsilon(1e-9));

  Image none(2, 1, 1, 0.0);
  CHECK_THROWS(psnr(a, b, &none));
  Image wrong(3, 1, 1);
  CHECK_THROWS(psnr(a, wrong));
}
