// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/data.hpp"
#include "ceimven/metrics.hpp"
#include "ceimven/model.hpp"
#include "ceimven/roi.hpp"

namespace ceimven {

struct TrainConfig {
  std::size_t batch_size = 42;
  std::size_t epochs = 500;
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  bool desk_scale = false;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::string checkpoint_dir;
  /// Optional step decay: lr *= factor every `lr_decay_every` epochs (0 = off).
  double lr_decay_factor = 1.0;
  std::size_t lr_decay_every = 0;
  double lambda_box = 1.0;

  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// CPU profile: channel_scale 0.1, 32x32 inputs, at most 50 epochs, batch 16.
void apply_desk_profile(TrainConfig& train, CeimvenConfig& model);

struct Example {
  Tensor image;  // [s, s, c]
  int label = 0;
  std::optional<BBox> box;  // 224 frame; absent for normal or mask-less samples
};
using ExampleSet = std::vector<Example>;

/// Resizes images to input_size (bilinear) and derives one box per sample as
/// the union of its mask components, expressed in the 224 frame.
ExampleSet to_examples(const std::vector<Sample>& samples, std::size_t input_size);

/// [b, s, s, c] batch of the listed examples; gray images are widened when
/// the batch mixes channel counts.
Tensor stack_images(const ExampleSet& set, const std::vector<std::size_t>& indices);

using VelocityMap = std::map<std::string, std::vector<float>>;

/// p <- p - lr * g (momentum 0) or v <- mu * v + g, p <- p - lr * v.
/// Non-trainable parameters and those without a gradient are left alone.
void sgd_step(const std::vector<ParamRef>& params, const std::map<std::string, std::vector<float>>& grads,
              double lr, double momentum, VelocityMap& velocity);

class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum = 0.0) : momentum_(momentum) {}
  /// Consumes and clears the gradients accumulated on the parameters.
  void step(const std::vector<ParamRef>& params, double lr);
  const VelocityMap& velocity() const { return velocity_; }

 private:
  double momentum_;
  VelocityMap velocity_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
  std::optional<double> val_auc;
  std::optional<double> val_iou;  // detector runs only

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
  bool operator==(const EpochRecord&) const = default;
};
using History = std::vector<EpochRecord>;

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD on cross-entropy. Leaves the model in eval mode. Throws
/// NumericError naming epoch and batch when the loss stops being finite.
History train(Model& model, const ExampleSet& train_set, const ExampleSet& val_set, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Same loop on detection_loss for a detector model.
History train_detector(Model& detector, const ExampleSet& train_set, const ExampleSet& val_set,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Single eval-mode pass.
EvalReport evaluate(Model& model, const ExampleSet& set, std::size_t batch_size = 64);

struct DetectionReport {
  double accuracy = 0.0;
  double mean_iou = 0.0;       // over samples with a truth box
  std::size_t boxed = 0;       // samples that entered mean_iou
  double mean_loss = 0.0;
  std::size_t total = 0;
  std::vector<Detection> detections;

  nlohmann::json to_json() const;
};

DetectionReport evaluate_detector(Model& detector, const ExampleSet& set, double lambda_box = 1.0,
                                  std::size_t batch_size = 64);

}  // namespace ceimven
