// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/model.hpp"

#include <cmath>

#include "ceimven/rng.hpp"
#include "ceimven/tape.hpp"

namespace ceimven {

std::string_view task_name(Task task) {
  return task == Task::kClassify ? "classify" : "detect";
}

Task task_from_name(std::string_view name) {
  if (name == "classify") return Task::kClassify;
  if (name == "detect") return Task::kDetect;
  throw ValueError("unknown task '" + std::string(name) + "'");
}

CeimvenConfig CeimvenConfig::resolved() const {
  CeimvenConfig c = *this;
  if (c.head_dropout < 0.0) c.head_dropout = c.variant().head_dropout;
  return c;
}

void CeimvenConfig::validate() const {
  const VariantSpec spec = variant();  // throws on a bad index
  if (num_classes < 2) throw ValueError("num_classes must be >= 2");
  if (intermediate_dense_units == 0) throw ValueError("intermediate_dense_units must be positive");
  if (head_conv_filters[0] == 0 || head_conv_filters[1] == 0) {
    throw ValueError("head_conv_filters must be positive");
  }
  if (head_dropout >= 0.0 && std::abs(head_dropout - spec.head_dropout) > 1e-12) {
    throw ValueError("head_dropout " + std::to_string(head_dropout) + " does not match the " +
                     std::string(family_name(family)) + " rate " + std::to_string(spec.head_dropout));
  }
  if (!(channel_scale > 0.0) || channel_scale > 1.0) throw ValueError("channel_scale must be in (0, 1]");
  if (input_size < 32 || input_size % 32 != 0) {
    throw ValueError("input_size must be a positive multiple of 32");
  }
}

nlohmann::json CeimvenConfig::to_json() const {
  const CeimvenConfig c = resolved();
  return {{"family", family_name(c.family)},
          {"variant_index", c.variant_index},
          {"num_classes", c.num_classes},
          {"head_conv_filters", c.head_conv_filters},
          {"head_dropout", c.head_dropout},
          {"intermediate_dense_units", c.intermediate_dense_units},
          {"freeze_backbone", c.freeze_backbone},
          {"channel_scale", c.channel_scale},
          {"input_size", c.input_size}};
}

CeimvenConfig CeimvenConfig::from_json(const nlohmann::json& j) {
  CeimvenConfig c;
  try {
    if (j.contains("family")) c.family = family_from_name(j.at("family").get<std::string>());
    c.variant_index = j.value("variant_index", c.variant_index);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.head_conv_filters = j.value("head_conv_filters", c.head_conv_filters);
    c.head_dropout = j.value("head_dropout", c.head_dropout);
    c.intermediate_dense_units = j.value("intermediate_dense_units", c.intermediate_dense_units);
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.channel_scale = j.value("channel_scale", c.channel_scale);
    c.input_size = j.value("input_size", c.input_size);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("model config: ") + e.what());
  }
  return c;
}

Model::Model(CeimvenConfig config, Task task, std::uint64_t seed)
    : config_(config.resolved()), task_(task) {
  config_.validate();
  const VariantSpec spec = config_.variant();
  auto add = [&](std::unique_ptr<Layer> layer) -> Layer& {
    layers_.push_back(std::move(layer));
    return *layers_.back();
  };
  const auto [f1, f2] = config_.head_conv_filters;
  add(std::make_unique<InputAdapter>("input", config_.input_size));
  auto backbone = std::make_unique<Backbone>("backbone", spec, config_.channel_scale,
                                             derive_seed(seed, "backbone"));
  backbone_ = backbone.get();
  add(std::move(backbone));
  add(std::make_unique<Conv2DLayer>("head_conv1", backbone_->output_channels(), f1, 3, 1, Padding::kSame,
                                    Activation::kRelu, seed));
  add(std::make_unique<Conv2DLayer>("head_conv2", f1, f2, 3, 1, Padding::kSame, Activation::kRelu, seed));
  add(std::make_unique<ActivationLayer>("relu", Activation::kRelu));
  add(std::make_unique<GlobalAvgPoolLayer>("global_pool"));
  add(std::make_unique<FlattenLayer>("flatten"));
  const std::size_t classes = static_cast<std::size_t>(config_.num_classes);
  const std::size_t units = config_.intermediate_dense_units;
  if (task_ == Task::kClassify) {
    add(std::make_unique<DropoutLayer>("dropout", config_.head_dropout));
    add(std::make_unique<DenseLayer>("dense", f2, units, Activation::kRelu, seed));
    add(std::make_unique<DenseLayer>("predictions", units, classes, Activation::kSoftmax, seed));
  } else {
    auto cls = std::make_unique<Sequential>("class_head");
    cls->add(std::make_unique<DropoutLayer>("class_head/dropout", config_.head_dropout));
    cls->add(std::make_unique<DenseLayer>("class_head/dense", f2, units, Activation::kRelu, seed));
    cls->add(std::make_unique<DenseLayer>("class_head/predictions", units, classes, Activation::kSoftmax, seed));
    auto box = std::make_unique<Sequential>("box_head");
    box->add(std::make_unique<DenseLayer>("box_head/dense", f2, units, Activation::kRelu, seed));
    box->add(std::make_unique<BoxRegressionLayer>("box_head/box", units, kBoxFrame, seed));
    class_head_ = &add(std::move(cls));
    box_head_ = &add(std::move(box));
  }
  set_backbone_frozen(config_.freeze_backbone);
}

void Model::set_backbone_frozen(bool frozen) {
  config_.freeze_backbone = frozen;
  backbone_->set_trainable(!frozen);
}

Tensor Model::forward(const Tensor& x, std::uint64_t seed) {
  return forward(x, ForwardContext{mode_, seed});
}

DetectorOutput Model::forward_detect(const Tensor& x, std::uint64_t seed) {
  return forward_detect(x, ForwardContext{mode_, seed});
}

Tensor Model::forward(const Tensor& x, const ForwardContext& ctx) {
  if (task_ != Task::kClassify) throw ValueError("forward: detector models use forward_detect");
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, ctx);
  return h;
}

DetectorOutput Model::forward_detect(const Tensor& x, const ForwardContext& ctx) {
  if (task_ != Task::kDetect) throw ValueError("forward_detect: classifier models use forward");
  Tensor h = x;
  for (auto& layer : layers_) {
    if (layer.get() == class_head_ || layer.get() == box_head_) continue;
    h = layer->forward(h, ctx);
  }
  return {class_head_->forward(h, ctx), box_head_->forward(h, ctx)};
}

std::vector<ParamRef> Model::parameters() const {
  std::vector<ParamRef> out;
  for (const auto& layer : layers_) layer->collect_parameters(out);
  return out;
}

std::vector<BufferRef> Model::buffers() const {
  std::vector<BufferRef> out;
  for (const auto& layer : layers_) layer->collect_buffers(out);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

nlohmann::json Model::manifest() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& layer : layers_) out.push_back(layer->describe());
  return out;
}

Model build_ceimven(const CeimvenConfig& config, std::uint64_t seed) {
  return Model(config, Task::kClassify, seed);
}

Model build_detector(const CeimvenConfig& config, std::uint64_t seed) {
  return Model(config, Task::kDetect, seed);
}

std::vector<int> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("argmax_rows: expected [n,k], got " + shape_str(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const auto p = probs.data();
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (p[i * k + j] > p[i * k + best]) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

Prediction predict(Model& model, const Tensor& images) {
  NoGradScope<float> no_grad;
  const ForwardContext ctx{Mode::kEval, 0};
  Tensor probs = model.task() == Task::kClassify ? model.forward(images, ctx)
                                                 : model.forward_detect(images, ctx).probs;
  return {probs, argmax_rows(probs)};
}

}  // namespace ceimven
