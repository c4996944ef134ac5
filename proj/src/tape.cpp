// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/tape.hpp"

#include <unordered_set>

#include "ceimven/error.hpp"

namespace ceimven {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose2d: return "transpose2d";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kBiasAdd: return "bias_add";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kDepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kRelu: return "relu";
    case OpKind::kSilu: return "silu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kDropout: return "dropout";
    case OpKind::kScaleChannels: return "scale_channels";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kSmoothL1: return "smooth_l1";
  }
  return "unknown";
}

namespace {

template <typename T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(tape_slot<T>()) {
  tape_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
void Tape<T>::record(OpKind kind, const std::vector<BasicTensor<T>>& inputs,
                     const BasicTensor<T>& output, std::function<void(std::span<const T>)> backward) {
  TapeNode<T> node;
  node.kind = kind;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    node.input_ids.push_back(in.id());
    node.inputs.push_back(in.impl());
  }
  output.impl()->requires_grad = true;
  node.output_id = output.id();
  node.output = output.impl();
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  bool produced = false;
  for (auto& node : nodes_) {
    node.output->grad.assign(node.output->data.size(), T(0));
    if (node.output == loss.impl()) produced = true;
  }
  if (!produced) throw ValueError("loss tensor was not produced on this tape");

  // Leaves with requires_grad get a zero buffer even when unreached.
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in->requires_grad && in->grad.size() != in->data.size()) {
        in->grad.assign(in->data.size(), T(0));
      }
    }
  }

  std::unordered_set<const TensorImpl<T>*> reached{loss.impl().get()};
  loss.impl()->grad[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!reached.contains(it->output.get())) continue;
    it->backward(std::span<const T>(it->output->grad));
    for (auto& in : it->inputs) {
      if (in->requires_grad) reached.insert(in.get());
    }
  }
}

template <typename T>
GradientMap<T> Tape<T>::gradients() const {
  std::unordered_set<const TensorImpl<T>*> outputs;
  for (const auto& node : nodes_) outputs.insert(node.output.get());
  GradientMap<T> map;
  for (const auto& node : nodes_) {
    for (const auto& in : node.inputs) {
      if (!in->requires_grad || outputs.contains(in.get())) continue;
      if (in->grad.size() == in->data.size()) {
        map[in->id] = in->grad;
      } else {
        map[in->id] = std::vector<T>(in->data.size(), T(0));
      }
    }
  }
  return map;
}

template <typename T>
bool Tape<T>::contains(const BasicTensor<T>& t) const {
  for (const auto& node : nodes_) {
    if (node.output == t.impl()) return true;
    for (const auto& in : node.inputs) {
      if (in == t.impl()) return true;
    }
  }
  return false;
}

template <typename T>
std::vector<T> Tape<T>::gradient(const BasicTensor<T>& t) const {
  if (!contains(t)) {
    throw ValueError("tensor " + std::to_string(t.id()) + " was created outside this tape");
  }
  if (t.impl()->grad.size() == t.numel()) return t.impl()->grad;
  return std::vector<T>(t.numel(), T(0));
}

template class Tape<float>;
template class Tape<double>;
template Tape<float>* active_tape<float>();
template Tape<double>* active_tape<double>();
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace ceimven
