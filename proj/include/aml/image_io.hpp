#pragma once

// Minimal PNG round-trip on top of libpng. Reads always yield 8-bit RGB
// (palette and gray inputs are expanded, alpha is dropped); writes accept
// 1-channel grayscale or 3-channel RGB.

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "aml/tensor.hpp"

namespace aml {

struct PngImage {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;  // row-major, interleaved channels

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline PngImage read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open " + path + " for reading");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("libpng read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("libpng info struct allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  PngImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] =
        img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const PngImage& img) {
  check(img.channels == 1 || img.channels == 3,
        "png write supports 1 or 3 channels, got " + std::to_string(img.channels));
  check(img.width > 0 && img.height > 0, "png write needs a non-empty image");
  check(img.data.size() ==
            static_cast<std::size_t>(img.width) * img.height * img.channels,
        "png image buffer size does not match its dimensions");

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("libpng write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("libpng info struct allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
        img.data.data() +
        static_cast<std::size_t>(y) * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// (1,C,H,W) tensor in [0,1] -> 8-bit image, rounding to nearest.
template <typename T>
PngImage tensor_to_image(const Tensor<T>& t) {
  const Shape& s = t.shape();
  check(s.n == 1 && (s.c == 1 || s.c == 3),
        "tensor_to_image expects (1,1,H,W) or (1,3,H,W), got " + s.str());
  PngImage img;
  img.width = s.w;
  img.height = s.h;
  img.channels = s.c;
  img.data.resize(static_cast<std::size_t>(s.w) * s.h * s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) {
        double v = static_cast<double>(t.at(0, c, y, x));
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        img.at(y, x, c) = static_cast<std::uint8_t>(v * 255.0 + 0.5);
      }
  return img;
}

// 8-bit image -> (1,C,H,W) tensor scaled to [0,1].
template <typename T>
Tensor<T> image_to_tensor(const PngImage& img) {
  Tensor<T> t(Shape(1, img.channels, img.height, img.width));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t.at(0, c, y, x) = static_cast<T>(img.at(y, x, c) / 255.0);
  return t;
}

}  // namespace aml
