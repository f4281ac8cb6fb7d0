// Float image container plus PNG (8-bit sRGB) and PFM (raw float) I/O.
// All in-memory pixel data is linear; sRGB encode/decode happens only at
// the PNG boundary.

#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshforge/math.hpp"

namespace meshforge {

// H x W x C row-major image, top-left origin.
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }

  Vec3 rgb(int x, int y) const {
    if (channels == 1) {
      double v = at(x, y, 0);
      return {v, v, v};
    }
    return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Bilinear sample with the pixel (i,j) value located at continuous (i,j);
  // coordinates outside the image clamp to the border.
  double sample_bilinear(double u, double v, int c) const {
    double x = clampd(u, 0.0, width - 1.0);
    double y = clampd(v, 0.0, height - 1.0);
    int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    double fx = x - x0, fy = y - y0;
    double a = at(x0, y0, c) * (1 - fx) + at(x1, y0, c) * fx;
    double b = at(x0, y1, c) * (1 - fx) + at(x1, y1, c) * fx;
    return a * (1 - fy) + b * fy;
  }
};

inline double srgb_encode(double linear) {
  double v = clampd(linear, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double srgb) {
  double v = clampd(srgb, 0.0, 1.0);
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

namespace detail {

struct PngFile {
  FILE* f = nullptr;
  explicit PngFile(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
  ~PngFile() { if (f) std::fclose(f); }
};

}  // namespace detail

// Writes an 8-bit PNG. `srgb` selects sRGB encoding (images) vs straight
// clamp-and-quantize (masks).
inline void write_png(const std::string& path, const Image& img, bool srgb = true) {
  if (!img.finite()) throw std::runtime_error("write_png: non-finite pixel values");
  detail::PngFile fp(path, "wb");
  if (!fp.f) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng failure on " + path);
  }
  png_init_io(png, fp.f);

  int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  int out_ch = img.channels == 1 ? 1 : 3;
  std::vector<png_byte> row(size_t(img.width) * out_ch);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < out_ch; ++c) {
        double v = img.at(x, y, std::min(c, img.channels - 1));
        v = srgb ? srgb_encode(v) : clampd(v, 0.0, 1.0);
        row[size_t(x) * out_ch + c] = png_byte(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::string& path, bool srgb = true) {
  detail::PngFile fp(path, "rb");
  if (!fp.f) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng failure on " + path);
  }
  png_init_io(png, fp.f);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int ch = int(png_get_channels(png, info));
  Image img(int(w), int(h), ch == 1 ? 1 : 3);
  std::vector<png_byte> row(size_t(w) * ch);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double v = row[size_t(x) * ch + std::min(c, ch - 1)] / 255.0;
        img.at(int(x), int(y), c) = srgb ? srgb_decode(v) : v;
      }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// PFM, little-endian (scale -1.0). Rows are stored bottom-up per the format.
inline void write_pfm(const std::string& path, const Image& img) {
  if (!img.finite()) throw std::runtime_error("write_pfm: non-finite pixel values");
  if (img.channels != 1 && img.channels != 3)
    throw std::runtime_error("write_pfm: channels must be 1 or 3");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pfm: cannot open " + path);
  f << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(size_t(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[size_t(x) * img.channels + c] = float(img.at(x, y, c));
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
}

inline Image read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  f >> magic >> w >> h >> scale;
  if (magic != "PF" && magic != "Pf") throw std::runtime_error("read_pfm: bad magic in " + path);
  if (scale >= 0) throw std::runtime_error("read_pfm: big-endian PFM unsupported: " + path);
  f.get();  // single whitespace after the scale
  int ch = magic == "PF" ? 3 : 1;
  Image img(w, h, ch);
  std::vector<float> row(size_t(w) * ch);
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!f) throw std::runtime_error("read_pfm: truncated file " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) img.at(x, y, c) = row[size_t(x) * ch + c];
  }
  return img;
}

// export_image contract: PNG is tone-mapped (clamp + sRGB), PFM keeps raw floats.
inline void export_image(const std::string& path_base, const Image& img) {
  if (!img.finite()) throw std::runtime_error("export_image: non-finite pixel values");
  write_png(path_base + ".png", img, /*srgb=*/true);
  write_pfm(path_base + ".pfm", img);
}

}  // namespace meshforge
