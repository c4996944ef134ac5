// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/roi.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ceimven/error.hpp"
#include "ceimven/losses.hpp"
#include "ceimven/ops.hpp"
#include "ceimven/tape.hpp"

namespace ceimven {

std::vector<BBox> bbox_from_mask(const Tensor& mask, std::size_t min_pixels) {
  if (!(mask.rank() == 2 || (mask.rank() == 3 && mask.dim(2) == 1))) {
    throw ShapeError("bbox_from_mask: expected [h,w] or [h,w,1], got " + shape_str(mask.shape()));
  }
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const auto m = mask.data();
  for (float v : m) {
    if (v != 0.0f && v != 1.0f) throw ValueError("bbox_from_mask: mask is not binary");
  }
  std::vector<std::uint8_t> seen(h * w, 0);
  std::vector<std::size_t> stack;
  std::vector<BBox> boxes;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (m[start] == 0.0f || seen[start]) continue;
    std::size_t x0 = w, y0 = h, x1 = 0, y1 = 0, count = 0;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w, x = p % w;
      ++count;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      auto visit = [&](std::size_t q) {
        if (m[q] != 0.0f && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    if (count >= min_pixels) {
      boxes.push_back({static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
                       static_cast<double>(y1 + 1)});
    }
  }
  return boxes;
}

std::optional<BBox> enclosing_box(const std::vector<BBox>& boxes) {
  if (boxes.empty()) return std::nullopt;
  BBox out = boxes.front();
  for (const auto& b : boxes) {
    out.x_min = std::min(out.x_min, b.x_min);
    out.y_min = std::min(out.y_min, b.y_min);
    out.x_max = std::max(out.x_max, b.x_max);
    out.y_max = std::max(out.y_max, b.y_max);
  }
  return out;
}

BBox scale_box(const BBox& b, double factor) {
  return {b.x_min * factor, b.y_min * factor, b.x_max * factor, b.y_max * factor};
}

BBox hflip_box(const BBox& b, double frame_width) {
  return {frame_width - b.x_max, b.y_min, frame_width - b.x_min, b.y_max};
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = iw > 0 && ih > 0 ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

nlohmann::json Detection::to_json(const std::string& id) const {
  return {{"id", id},
          {"class", kClassNames.at(static_cast<std::size_t>(label))},
          {"confidence", confidence},
          {"bbox", bbox.to_json()},
          {"lesion", lesion}};
}

BBox box_from_prediction(float a, float b, float c, float d) {
  auto clamp = [](double v) { return std::clamp(v, 0.0, kBoxFrame); };
  return {clamp(std::min(a, c)), clamp(std::min(b, d)), clamp(std::max(a, c)), clamp(std::max(b, d))};
}

std::vector<Detection> detect_batch(Model& detector, const Tensor& images) {
  if (detector.task() != Task::kDetect) throw ValueError("detect: model is not a detector");
  NoGradScope<float> no_grad;
  const DetectorOutput out = detector.forward_detect(images, ForwardContext{Mode::kEval, 0});
  const auto labels = argmax_rows(out.probs);
  const std::size_t k = out.probs.dim(1);
  const auto p = out.probs.data();
  const auto b = out.boxes.data();
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Detection d;
    d.label = labels[i];
    d.confidence = p[i * k + static_cast<std::size_t>(labels[i])];
    d.bbox = box_from_prediction(b[i * 4], b[i * 4 + 1], b[i * 4 + 2], b[i * 4 + 3]);
    d.lesion = d.label != kNormalClass;
    dets.push_back(d);
  }
  return dets;
}

Detection detect(Model& detector, const Tensor& image) {
  if (image.rank() == 3) return detect_batch(detector, reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)})).front();
  if (image.rank() != 4 || image.dim(0) != 1) throw ShapeError("detect: expected one image, got " + shape_str(image.shape()));
  return detect_batch(detector, image).front();
}

nlohmann::json overlay_record(const std::string& id, const Detection& d) {
  return {{"id", id},
          {"x", d.bbox.x_min},
          {"y", d.bbox.y_min},
          {"width", d.bbox.width()},
          {"height", d.bbox.height()},
          {"label", fmt::format("{} {:.0f}%", kClassNames.at(static_cast<std::size_t>(d.label)), d.confidence * 100.0)},
          {"lesion", d.lesion}};
}

namespace {

template <typename T>
BasicTensor<T> detection_loss_impl(const BasicTensor<T>& probs, const BasicTensor<T>& boxes,
                                   const std::vector<DetectionTarget>& truth, double lambda_box) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4 || boxes.dim(0) != truth.size()) {
    throw ShapeError("detection_loss: boxes must be [n,4] matching the targets, got " + shape_str(boxes.shape()));
  }
  std::vector<int> labels;
  std::vector<bool> lesion;
  std::vector<T> target(truth.size() * 4, T(0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& t = truth[i];
    labels.push_back(t.label);
    const bool has_box = t.label != kNormalClass;
    if (has_box && !t.box) throw ValueError("detection_loss: lesion sample " + std::to_string(i) + " has no box");
    lesion.push_back(has_box);
    if (has_box) {
      const BBox& b = *t.box;
      target[i * 4 + 0] = static_cast<T>(b.x_min / kBoxFrame);
      target[i * 4 + 1] = static_cast<T>(b.y_min / kBoxFrame);
      target[i * 4 + 2] = static_cast<T>(b.x_max / kBoxFrame);
      target[i * 4 + 3] = static_cast<T>(b.y_max / kBoxFrame);
    }
  }
  BasicTensor<T> ce = cross_entropy(probs, labels);
  BasicTensor<T> normalized = scalar_mul(boxes, 1.0 / kBoxFrame);
  BasicTensor<T> box_term = masked_smooth_l1(normalized, BasicTensor<T>(boxes.shape(), std::move(target)), lesion);
  return add(ce, scalar_mul(box_term, lambda_box));
}

}  // namespace

Tensor detection_loss(const DetectorOutput& pred, const std::vector<DetectionTarget>& truth, double lambda_box) {
  return detection_loss_impl(pred.probs, pred.boxes, truth, lambda_box);
}

TensorD detection_loss(const TensorD& probs, const TensorD& boxes, const std::vector<DetectionTarget>& truth,
                       double lambda_box) {
  return detection_loss_impl(probs, boxes, truth, lambda_box);
}

}  // namespace ceimven
