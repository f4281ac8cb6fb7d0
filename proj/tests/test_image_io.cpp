#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "meshforge/image.hpp"

using namespace meshforge;
namespace fs = std::filesystem;

static fs::path tmpdir() {
  fs::path d = fs::temp_directory_path() / "meshforge_image_test";
  fs::create_directories(d);
  return d;
}

TEST_CASE("pfm round trip is bit exact at f32") {
  Image img(7, 5, 3);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = double(float(0.137 * double(i) - 3.2));
  auto path = (tmpdir() / "rt.pfm").string();
  write_pfm(path, img);
  Image back = read_pfm(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.channels == 3);
  for (size_t i = 0; i < img.data.size(); ++i) CHECK(float(back.data[i]) == float(img.data[i]));
}

TEST_CASE("png clamp rule") {
  Image img(2, 1, 3);
  img.at(0, 0, 0) = 1.5;  // clamps to 255
  img.at(1, 0, 0) = 0.0;
  auto base = (tmpdir() / "clamp").string();
  export_image(base, img);
  Image png = read_png(base + ".png");
  CHECK(png.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(png.at(1, 0, 0) == doctest::Approx(0.0));
  Image pfm = read_pfm(base + ".pfm");
  CHECK(pfm.at(0, 0, 0) == doctest::Approx(1.5));
}

TEST_CASE("all-zeros image exports black") {
  Image img(4, 4, 3);
  auto base = (tmpdir() / "black").string();
  export_image(base, img);
  Image png = read_png(base + ".png");
  for (double v : png.data) CHECK(v == 0.0);
  Image pfm = read_pfm(base + ".pfm");
  for (double v : pfm.data) CHECK(v == 0.0);
}

TEST_CASE("non-finite values are rejected") {
  Image img(2, 2, 1);
  img.at(0, 0, 0) = std::nan("");
  CHECK_THROWS(export_image((tmpdir() / "bad").string(), img));
}

TEST_CASE("srgb round trip") {
  for (double v : {0.0, 0.001, 0.2, 0.5, 1.0})
    CHECK(srgb_decode(srgb_encode(v)) == doctest::Approx(v).epsilon(1e-10));
}

TEST_CASE("bilinear sampling") {
  Image img(2, 2, 1);
  img.at(0, 0, 0) = 0;
  img.at(1, 0, 0) = 1;
  img.at(0, 1, 0) = 2;
  img.at(1, 1, 0) = 3;
  CHECK(img.sample_bilinear(0.5, 0.5, 0) == doctest::Approx(1.5));
  CHECK(img.sample_bilinear(1.0, 0.0, 0) == doctest::Approx(1.0));
  // border clamp
  CHECK(img.sample_bilinear(-5.0, 0.0, 0) == doctest::Approx(0.0));
}
