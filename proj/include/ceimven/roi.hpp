// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/model.hpp"

namespace ceimven {

/// Half-open pixel box [x_min, x_max) x [y_min, y_max).
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  bool operator==(const BBox&) const = default;
  nlohmann::json to_json() const { return {x_min, y_min, x_max, y_max}; }
};

/// Smaller components are treated as mask speckle.
inline constexpr std::size_t kMinComponentPixels = 16;

/// Tight box around each 4-connected foreground component of a binary mask
/// ([h, w] or [h, w, 1]), in raster order of each component's first pixel.
/// Throws ValueError on values other than 0 and 1.
std::vector<BBox> bbox_from_mask(const Tensor& mask, std::size_t min_pixels = kMinComponentPixels);

/// Union of all component boxes, or nullopt for an empty mask.
std::optional<BBox> enclosing_box(const std::vector<BBox>& boxes);

BBox scale_box(const BBox& b, double factor);
/// Horizontal mirror within a frame of the given width.
BBox hflip_box(const BBox& b, double frame_width);

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct Detection {
  BBox bbox;
  int label = 0;
  double confidence = 0.0;
  /// False for the normal class; the box is then reported but not a lesion.
  bool lesion = true;

  nlohmann::json to_json(const std::string& id) const;
};

/// Orders each coordinate pair and clamps to [0, 224].
BBox box_from_prediction(float a, float b, float c, float d);

/// Eval-mode detection on one [s, s, c] or [1, s, s, c] image.
Detection detect(Model& detector, const Tensor& image);
std::vector<Detection> detect_batch(Model& detector, const Tensor& images);

/// Plot-ready overlay entry: box corners plus a "<class> <pct>%" caption.
nlohmann::json overlay_record(const std::string& id, const Detection& d);

struct DetectionTarget {
  int label = 0;
  std::optional<BBox> box;  // in the 224 frame; required unless label is normal
};

/// Cross-entropy on the class head plus lambda_box times smooth-L1 over the
/// box coordinates normalised by 224, averaged over lesion samples only.
Tensor detection_loss(const DetectorOutput& pred, const std::vector<DetectionTarget>& truth,
                      double lambda_box = 1.0);
/// Same computation on double tensors, for gradient checking.
TensorD detection_loss(const TensorD& probs, const TensorD& boxes, const std::vector<DetectionTarget>& truth,
                       double lambda_box = 1.0);

}  // namespace ceimven
