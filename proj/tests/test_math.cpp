#include <doctest.h>

#include "meshforge/math.hpp"

using namespace meshforge;

TEST_CASE("vector basics") {
  Vec3 a{1, 2, 3}, b{4, 5, 6};
  CHECK(dot(a, b) == doctest::Approx(32.0));
  Vec3 c = cross(a, b);
  CHECK(c.x == doctest::Approx(-3));
  CHECK(c.y == doctest::Approx(6));
  CHECK(c.z == doctest::Approx(-3));
  CHECK(norm(normalized(b)) == doctest::Approx(1.0));
}

TEST_CASE("rigid transform round trip") {
  // rotation about z by 90 degrees
  Mat3 R;
  R.m = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  RigidTransform T{R, {1, 2, 3}};
  Vec3 p{0.5, -0.25, 2};
  Vec3 q = T.apply(p);
  Vec3 back = T.R.transposed() * (q - T.t);
  CHECK(norm(back - p) < 1e-14);
  CHECK(orthonormality_error(R) < 1e-14);
  CHECK(R.det() == doctest::Approx(1.0));
}

TEST_CASE("camera center") {
  Mat3 R;
  R.m = {0, 1, 0, -1, 0, 0, 0, 0, 1};
  Vec3 center{3, -1, 2};
  RigidTransform T{R, -(R * center)};
  CHECK(norm(T.center() - center) < 1e-12);
}

TEST_CASE("box unit mapping") {
  Box3 box{{-1, 0, 2}, {1, 4, 3}};
  Vec3 p{0.5, 1, 2.25};
  CHECK(norm(box.to_world(box.to_unit(p)) - p) < 1e-14);
  CHECK(box.diagonal() == doctest::Approx(std::sqrt(4.0 + 16.0 + 1.0)));
}

TEST_CASE("softplus inverse") {
  for (double y : {0.01, 0.5, 2.0, 35.0})
    CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-10));
}
