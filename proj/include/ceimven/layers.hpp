// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/nn_ops.hpp"

namespace ceimven {

struct ForwardContext {
  Mode mode = Mode::kEval;
  /// Per-step seed; layers with randomness derive their own stream from it.
  std::uint64_t seed = 0;
};

/// Named handle to a parameter; `tensor` shares storage with the layer.
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Non-trainable state such as batch-norm running statistics.
struct BufferRef {
  std::string name;
  Tensor tensor;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& x, const ForwardContext& ctx) = 0;

  /// Appends this layer's parameters as "<layer name>/<local name>".
  virtual void collect_parameters(std::vector<ParamRef>& out) const { (void)out; }
  virtual void collect_buffers(std::vector<BufferRef>& out) const { (void)out; }

  /// Layer manifest entry: name and kind plus kind-specific settings.
  virtual nlohmann::json describe() const { return {{"name", name_}, {"kind", kind()}}; }

  bool trainable() const { return trainable_; }
  virtual void set_trainable(bool trainable);

 protected:
  std::string name_;
  bool trainable_ = true;
};

/// Exact number of scalar parameters, running statistics excluded.
std::size_t param_count(const Layer& layer);

/// Checks the [n, size, size, c] contract and widens one-channel input to three.
class InputAdapter : public Layer {
 public:
  InputAdapter(std::string name, std::size_t input_size);
  std::string_view kind() const override { return "input"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  nlohmann::json describe() const override;
  std::size_t input_size() const { return input_size_; }

 private:
  std::size_t input_size_;
};

class Conv2DLayer : public Layer {
 public:
  Conv2DLayer(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel,
              std::size_t stride, Padding padding, Activation act, std::uint64_t seed);
  std::string_view kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  void collect_parameters(std::vector<ParamRef>& out) const override;
  nlohmann::json describe() const override;
  const ConvParams<float>& params() const { return params_; }

 private:
  ConvParams<float> params_;
  Activation act_;
};

class ActivationLayer : public Layer {
 public:
  ActivationLayer(std::string name, Activation act) : Layer(std::move(name)), act_(act) {}
  std::string_view kind() const override { return "activation"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  nlohmann::json describe() const override;

 private:
  Activation act_;
};

class GlobalAvgPoolLayer : public Layer {
 public:
  using Layer::Layer;
  std::string_view kind() const override { return "global_avg_pool"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
};

/// [n, ...] -> [n, prod(...)]; the identity on already-flat input.
class FlattenLayer : public Layer {
 public:
  using Layer::Layer;
  std::string_view kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
};

class DropoutLayer : public Layer {
 public:
  DropoutLayer(std::string name, double rate);
  std::string_view kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  nlohmann::json describe() const override;
  double rate() const { return rate_; }

 private:
  double rate_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::string name, std::size_t in_features, std::size_t units, Activation act,
             std::uint64_t seed);
  std::string_view kind() const override { return "dense"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  void collect_parameters(std::vector<ParamRef>& out) const override;
  nlohmann::json describe() const override;
  std::size_t units() const { return units_; }
  Activation act() const { return act_; }
  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }

 private:
  std::size_t units_;
  Activation act_;
  Tensor weights_;
  Tensor bias_;
};

/// Dense map to four sigmoid-squashed values scaled to [0, frame].
class BoxRegressionLayer : public Layer {
 public:
  BoxRegressionLayer(std::string name, std::size_t in_features, double frame, std::uint64_t seed);
  std::string_view kind() const override { return "box_regression"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  void collect_parameters(std::vector<ParamRef>& out) const override;
  nlohmann::json describe() const override;
  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }

 private:
  double frame_;
  Tensor weights_;
  Tensor bias_;
};

/// Runs children in order; parameters keep the children's own names.
class Sequential : public Layer {
 public:
  using Layer::Layer;
  std::string_view kind() const override { return "sequential"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  void collect_parameters(std::vector<ParamRef>& out) const override;
  void collect_buffers(std::vector<BufferRef>& out) const override;
  nlohmann::json describe() const override;
  void set_trainable(bool trainable) override;

  Layer& add(std::unique_ptr<Layer> layer);
  const std::vector<std::unique_ptr<Layer>>& children() const { return children_; }

 private:
  std::vector<std::unique_ptr<Layer>> children_;
};

}  // namespace ceimven
