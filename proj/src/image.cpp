// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ceimven/error.hpp"

namespace ceimven {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "rb"));
  if (!file) throw DataError("cannot open image " + name);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("not a PNG file: " + name);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed for " + name);
  }
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + name);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (img.width == 0 || img.height == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("zero-sized image: " + name);
  }
  img.pixels.resize(img.width * img.height * img.channels);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (img.channels != 1 && img.channels != 3) throw DataError("unsupported channel layout in " + name);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ValueError("write_png: 1 or 3 channels required");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw ValueError("write_png: pixel buffer does not match dimensions");
  }
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "wb"));
  if (!file) throw IoError("cannot write image " + name);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed for " + name);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + name);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width * image.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const Image& image, double scale) {
  std::vector<float> data(image.pixels.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(image.pixels[i] / scale);
  return Tensor(Shape{image.height, image.width, image.channels}, std::move(data));
}

Image tensor_to_image(const Tensor& t, double scale) {
  if (t.rank() != 3) throw ShapeError("tensor_to_image: expected [h,w,c], got " + shape_str(t.shape()));
  Image img{t.dim(1), t.dim(0), t.dim(2), {}};
  img.pixels.resize(t.numel());
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(d[i] * scale), 0L, 255L));
  }
  return img;
}

namespace {

void require_hwc(const char* op, const Tensor& t, std::size_t oh, std::size_t ow) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected [h,w,c], got " + shape_str(t.shape()));
  if (t.dim(0) == 0 || t.dim(1) == 0 || oh == 0 || ow == 0) {
    throw ValueError(std::string(op) + ": zero-sized image");
  }
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_hwc("resize_bilinear", image, out_h, out_w);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h == out_h && w == out_w) return image.clone();
  const auto src = image.data();
  std::vector<float> out(out_h * out_w * c);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = src[(y0 * w + x0) * c + ch], b = src[(y0 * w + x1) * c + ch];
        const double d = src[(y1 * w + x0) * c + ch], e = src[(y1 * w + x1) * c + ch];
        const double top = a + (b - a) * tx, bottom = d + (e - d) * tx;
        out[(oy * out_w + ox) * c + ch] = static_cast<float>(top + (bottom - top) * ty);
      }
    }
  }
  return Tensor(Shape{out_h, out_w, c}, std::move(out));
}

Tensor resize_nearest(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_hwc("resize_nearest", image, out_h, out_w);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const auto src = image.data();
  std::vector<float> out(out_h * out_w * c);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t y = std::min(h - 1, (2 * oy + 1) * h / (2 * out_h));
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t x = std::min(w - 1, (2 * ox + 1) * w / (2 * out_w));
      for (std::size_t ch = 0; ch < c; ++ch) out[(oy * out_w + ox) * c + ch] = src[(y * w + x) * c + ch];
    }
  }
  return Tensor(Shape{out_h, out_w, c}, std::move(out));
}

}  // namespace ceimven
