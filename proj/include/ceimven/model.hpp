// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/backbone.hpp"
#include "ceimven/layers.hpp"

namespace ceimven {

/// Label order used everywhere: folder names map to these indices.
inline constexpr std::array<const char*, 3> kClassNames{"benign", "malignant", "normal"};
inline constexpr int kNormalClass = 2;

/// Box coordinates are always expressed in the 224x224 frame, whatever the
/// network input size.
inline constexpr double kBoxFrame = 224.0;

enum class Task { kClassify, kDetect };
std::string_view task_name(Task task);
Task task_from_name(std::string_view name);

struct CeimvenConfig {
  Family family = Family::kV1;
  int variant_index = 0;
  int num_classes = 3;
  std::array<std::size_t, 2> head_conv_filters{256, 128};
  /// Negative means "the family's rate"; resolved() fills it in.
  double head_dropout = -1.0;
  std::size_t intermediate_dense_units = 64;
  bool freeze_backbone = false;
  double channel_scale = 1.0;
  /// Spatial size the input adapter accepts; 224 except at desk scale.
  std::size_t input_size = 224;

  VariantSpec variant() const { return variant_spec(family, variant_index); }
  CeimvenConfig resolved() const;
  /// Throws ValueError on any broken invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static CeimvenConfig from_json(const nlohmann::json& j);
};

struct DetectorOutput {
  Tensor probs;  // [n, num_classes]
  Tensor boxes;  // [n, 4] as (x_min, y_min, x_max, y_max), unordered, in [0, 224]
};

/// Classifier (10 top-level layers) or detector (the first 7 of those, then a
/// class head and a box head). Owns its layers; move-only.
class Model {
 public:
  Model(CeimvenConfig config, Task task, std::uint64_t seed);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const CeimvenConfig& config() const { return config_; }
  Task task() const { return task_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  Backbone& backbone() { return *backbone_; }
  const Backbone& backbone() const { return *backbone_; }

  /// Classifier forward: [n, s, s, c] -> probabilities [n, num_classes].
  /// `seed` feeds dropout in train mode.
  Tensor forward(const Tensor& x, std::uint64_t seed = 0);
  /// Detector forward through the shared trunk and both heads.
  DetectorOutput forward_detect(const Tensor& x, std::uint64_t seed = 0);
  /// Same with an explicit context; does not touch the model's mode.
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  DetectorOutput forward_detect(const Tensor& x, const ForwardContext& ctx);

  std::vector<ParamRef> parameters() const;
  std::vector<BufferRef> buffers() const;
  std::size_t param_count() const;
  /// Top-level layer entries in order.
  nlohmann::json manifest() const;

  void set_backbone_frozen(bool frozen);

 private:
  CeimvenConfig config_;
  Task task_;
  Mode mode_ = Mode::kEval;
  std::vector<std::unique_ptr<Layer>> layers_;
  Backbone* backbone_ = nullptr;
  // Detector heads; also present in layers_.
  Layer* class_head_ = nullptr;
  Layer* box_head_ = nullptr;
};

Model build_ceimven(const CeimvenConfig& config, std::uint64_t seed = 0);
Model build_detector(const CeimvenConfig& config, std::uint64_t seed = 0);

struct Prediction {
  Tensor probs;
  std::vector<int> labels;
};

/// Eval-mode class probabilities and argmax labels (lowest index wins ties).
/// Safe to call concurrently on a shared model.
Prediction predict(Model& model, const Tensor& images);

/// Index of the largest entry of each row; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace ceimven
