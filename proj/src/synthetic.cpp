// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/synthetic.hpp"

#include <cmath>

#include "ceimven/image.hpp"
#include "ceimven/rng.hpp"

namespace ceimven {

namespace fs = std::filesystem;

void write_synthetic_busi(const fs::path& root, std::size_t per_class, std::size_t size, std::uint64_t seed) {
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    const fs::path dir = root / kClassNames[c];
    fs::create_directories(dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(derive_seed(seed, kClassNames[c]), i));
      Image img{size, size, 1, std::vector<std::uint8_t>(size * size)};
      Image mask{size, size, 1, std::vector<std::uint8_t>(size * size, 0)};
      const double half = static_cast<double>(size) * rng.uniform(0.12, 0.25);
      const double cx = rng.uniform(half + 1, static_cast<double>(size) - half - 1);
      const double cy = rng.uniform(half + 1, static_cast<double>(size) - half - 1);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
          bool inside = false;
          if (c == 0) inside = dx * dx + dy * dy <= half * half;
          if (c == 1) inside = std::abs(dx) <= half && std::abs(dy) <= half;
          const double base = inside ? 200.0 : 50.0;
          img.pixels[y * size + x] = static_cast<std::uint8_t>(base + rng.uniform(-30.0, 30.0));
          if (inside) mask.pixels[y * size + x] = 255;
        }
      }
      const std::string stem = std::string(kClassNames[c]) + " (" + std::to_string(i + 1) + ")";
      write_png(dir / (stem + ".png"), img);
      write_png(dir / (stem + "_mask.png"), mask);
    }
  }
}

ExampleSet separable_set(std::size_t n, std::size_t size, std::uint64_t seed) {
  constexpr double kLevels[3] = {0.2, 0.5, 0.8};
  ExampleSet out;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const int label = static_cast<int>(i % 3);
    std::vector<float> px(size * size * 3);
    for (auto& v : px) v = static_cast<float>(kLevels[label] + rng.uniform(-0.1, 0.1));
    out.push_back({Tensor(Shape{size, size, 3}, std::move(px)), label, std::nullopt});
  }
  return out;
}

ExampleSet square_detection_set(std::size_t n, std::size_t size, std::uint64_t seed) {
  ExampleSet out;
  const double scale = static_cast<double>(size) / kBoxFrame;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const double side = rng.uniform(60.0, 130.0);
    const double x0 = rng.uniform(0.0, kBoxFrame - side), y0 = rng.uniform(0.0, kBoxFrame - side);
    // Snap to the rendering grid so the truth box is exactly what is drawn.
    const double gx0 = std::round(x0 * scale), gy0 = std::round(y0 * scale);
    const double gx1 = std::round((x0 + side) * scale), gy1 = std::round((y0 + side) * scale);
    std::vector<float> px(size * size * 3);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const bool inside = x >= gx0 && x < gx1 && y >= gy0 && y < gy1;
        const float v = static_cast<float>((inside ? (i % 2 ? 0.95 : 0.7) : 0.15) + rng.uniform(-0.05, 0.05));
        for (std::size_t c = 0; c < 3; ++c) px[(y * size + x) * 3 + c] = v;
      }
    }
    BBox box{gx0 / scale, gy0 / scale, gx1 / scale, gy1 / scale};
    out.push_back({Tensor(Shape{size, size, 3}, std::move(px)), static_cast<int>(i % 2), box});
  }
  return out;
}

}  // namespace ceimven
