// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/layers.hpp"

#include "ceimven/rng.hpp"

namespace ceimven {

void Layer::set_trainable(bool trainable) {
  trainable_ = trainable;
  std::vector<ParamRef> params;
  collect_parameters(params);
  for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

std::size_t param_count(const Layer& layer) {
  std::vector<ParamRef> params;
  layer.collect_parameters(params);
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

namespace {

Tensor trainable_tensor(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace

InputAdapter::InputAdapter(std::string name, std::size_t input_size)
    : Layer(std::move(name)), input_size_(input_size) {}

Tensor InputAdapter::forward(const Tensor& x, const ForwardContext&) {
  if (x.rank() != 4 || x.dim(1) != input_size_ || x.dim(2) != input_size_ ||
      (x.dim(3) != 1 && x.dim(3) != 3)) {
    throw ShapeError("input must be [n," + std::to_string(input_size_) + "," +
                     std::to_string(input_size_) + ",1|3], got " + shape_str(x.shape()));
  }
  if (x.dim(3) == 3) return x;
  const auto xd = x.data();
  std::vector<float> out(xd.size() * 3);
  for (std::size_t i = 0; i < xd.size(); ++i) out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = xd[i];
  return Tensor(Shape{x.dim(0), x.dim(1), x.dim(2), 3}, std::move(out));
}

nlohmann::json InputAdapter::describe() const {
  auto j = Layer::describe();
  j["input_size"] = input_size_;
  return j;
}

Conv2DLayer::Conv2DLayer(std::string name, std::size_t in_channels, std::size_t filters,
                         std::size_t kernel, std::size_t stride, Padding padding, Activation act,
                         std::uint64_t seed)
    : Layer(std::move(name)), act_(act) {
  params_.filters = filters;
  params_.kernel_h = params_.kernel_w = kernel;
  params_.stride_h = params_.stride_w = stride;
  params_.padding = padding;
  params_.weights = trainable_tensor(Tensor::create(
      {kernel, kernel, in_channels, filters},
      init::Kaiming{kernel * kernel * in_channels, derive_seed(seed, name_ + "/kernel")}));
  params_.bias = trainable_tensor(Tensor::zeros({filters}));
}

Tensor Conv2DLayer::forward(const Tensor& x, const ForwardContext&) {
  return activation(act_, conv2d(x, params_));
}

void Conv2DLayer::collect_parameters(std::vector<ParamRef>& out) const {
  out.push_back({name_ + "/kernel", params_.weights, trainable_});
  out.push_back({name_ + "/bias", params_.bias, trainable_});
}

nlohmann::json Conv2DLayer::describe() const {
  auto j = Layer::describe();
  j["filters"] = params_.filters;
  j["kernel"] = {params_.kernel_h, params_.kernel_w};
  j["stride"] = {params_.stride_h, params_.stride_w};
  j["padding"] = params_.padding == Padding::kSame ? "same" : "valid";
  j["activation"] = activation_name(act_);
  return j;
}

Tensor ActivationLayer::forward(const Tensor& x, const ForwardContext&) {
  return activation(act_, x);
}

nlohmann::json ActivationLayer::describe() const {
  auto j = Layer::describe();
  j["activation"] = activation_name(act_);
  return j;
}

Tensor GlobalAvgPoolLayer::forward(const Tensor& x, const ForwardContext&) {
  return global_avg_pool(x);
}

Tensor FlattenLayer::forward(const Tensor& x, const ForwardContext&) {
  if (x.rank() == 2) return x;
  return reshape(x, Shape{x.dim(0), x.numel() / x.dim(0)});
}

DropoutLayer::DropoutLayer(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {
  if (!(rate >= 0.0) || rate >= 1.0) throw ValueError("dropout rate must be in [0,1)");
}

Tensor DropoutLayer::forward(const Tensor& x, const ForwardContext& ctx) {
  return dropout(x, rate_, ctx.mode, derive_seed(ctx.seed, name_));
}

nlohmann::json DropoutLayer::describe() const {
  auto j = Layer::describe();
  j["rate"] = rate_;
  return j;
}

DenseLayer::DenseLayer(std::string name, std::size_t in_features, std::size_t units, Activation act,
                       std::uint64_t seed)
    : Layer(std::move(name)), units_(units), act_(act) {
  if (units == 0 || in_features == 0) throw ValueError("dense layer needs positive sizes");
  weights_ = trainable_tensor(Tensor::create(
      {in_features, units}, init::Kaiming{in_features, derive_seed(seed, name_ + "/kernel")}));
  bias_ = trainable_tensor(Tensor::zeros({units}));
}

Tensor DenseLayer::forward(const Tensor& x, const ForwardContext&) {
  return dense(x, weights_, bias_, act_);
}

void DenseLayer::collect_parameters(std::vector<ParamRef>& out) const {
  out.push_back({name_ + "/kernel", weights_, trainable_});
  out.push_back({name_ + "/bias", bias_, trainable_});
}

nlohmann::json DenseLayer::describe() const {
  auto j = Layer::describe();
  j["units"] = units_;
  j["activation"] = activation_name(act_);
  return j;
}

BoxRegressionLayer::BoxRegressionLayer(std::string name, std::size_t in_features, double frame,
                                       std::uint64_t seed)
    : Layer(std::move(name)), frame_(frame) {
  weights_ = trainable_tensor(Tensor::create(
      {in_features, 4}, init::Kaiming{in_features, derive_seed(seed, name_ + "/kernel")}));
  bias_ = trainable_tensor(Tensor::zeros({4}));
}

Tensor BoxRegressionLayer::forward(const Tensor& x, const ForwardContext&) {
  return scalar_mul(dense(x, weights_, bias_, Activation::kSigmoid), frame_);
}

void BoxRegressionLayer::collect_parameters(std::vector<ParamRef>& out) const {
  out.push_back({name_ + "/kernel", weights_, trainable_});
  out.push_back({name_ + "/bias", bias_, trainable_});
}

nlohmann::json BoxRegressionLayer::describe() const {
  auto j = Layer::describe();
  j["frame"] = frame_;
  return j;
}

Tensor Sequential::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor h = x;
  for (auto& c : children_) h = c->forward(h, ctx);
  return h;
}

void Sequential::collect_parameters(std::vector<ParamRef>& out) const {
  for (const auto& c : children_) c->collect_parameters(out);
}

void Sequential::collect_buffers(std::vector<BufferRef>& out) const {
  for (const auto& c : children_) c->collect_buffers(out);
}

nlohmann::json Sequential::describe() const {
  auto j = Layer::describe();
  j["layers"] = nlohmann::json::array();
  for (const auto& c : children_) j["layers"].push_back(c->describe());
  return j;
}

void Sequential::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (auto& c : children_) c->set_trainable(trainable);
}

Layer& Sequential::add(std::unique_ptr<Layer> layer) {
  children_.push_back(std::move(layer));
  return *children_.back();
}

}  // namespace ceimven
