// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ceimven/tensor.hpp"

namespace ceimven {

/// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// Decodes any PNG to 8-bit gray or RGB; alpha is dropped, palettes expanded.
/// Throws DataError naming the file when it cannot be decoded.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// [h, w, c] floats with values v / scale.
Tensor image_to_tensor(const Image& image, double scale = 255.0);
/// Inverse of image_to_tensor with rounding and clamping to [0, 255].
Image tensor_to_image(const Tensor& t, double scale = 255.0);

/// Bilinear resize of [h, w, c] with half-pixel centers and edge clamping;
/// the identity when the size is unchanged.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);
/// Nearest-neighbour resize of [h, w, c], sampling at half-pixel centers.
Tensor resize_nearest(const Tensor& image, std::size_t out_h, std::size_t out_w);

}  // namespace ceimven
