// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "ceimven/tensor.hpp"

namespace ceimven {

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kAddScalar,
  kMatMul,
  kReshape,
  kTranspose2d,
  kSum,
  kMean,
  kBiasAdd,
  kConv2d,
  kDepthwiseConv2d,
  kBatchNorm,
  kRelu,
  kSilu,
  kSigmoid,
  kSoftmax,
  kGlobalAvgPool,
  kDropout,
  kScaleChannels,
  kCrossEntropy,
  kSmoothL1,
};

std::string_view op_name(OpKind kind);

/// One recorded operation. The backward closure receives the gradient of the
/// output and accumulates into the gradient buffers of its inputs.
template <typename T>
struct TapeNode {
  OpKind kind;
  std::vector<std::uint64_t> input_ids;
  std::uint64_t output_id = 0;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::shared_ptr<TensorImpl<T>> output;
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
using GradientMap = std::map<std::uint64_t, std::vector<T>>;

/// Wengert list for reverse-mode differentiation. Nodes are appended in
/// creation order, so reverse iteration is a valid topological order.
///
/// Tensors produced by a recorded op are intermediates: their gradients are
/// recomputed from zero on every backward() call. All other tensors that feed
/// the tape are leaves: their gradients accumulate until zero_grad().
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(OpKind kind, const std::vector<BasicTensor<T>>& inputs, const BasicTensor<T>& output,
              std::function<void(std::span<const T>)> backward);

  /// Propagates d(loss)/d(.) to every tensor on the tape. The loss must be a
  /// single element produced by a recorded op.
  void backward(const BasicTensor<T>& loss);

  /// Gradients of every requires_grad leaf seen by the tape, keyed by tensor id.
  GradientMap<T> gradients() const;

  /// Gradient of a tensor that participated in this tape; zeros when the
  /// tensor was not reached by the last backward pass.
  std::vector<T> gradient(const BasicTensor<T>& t) const;

  bool contains(const BasicTensor<T>& t) const;
  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode<T>>& nodes() const { return nodes_; }

 private:
  std::vector<TapeNode<T>> nodes_;
};

/// Tape that ops record onto on the calling thread, or nullptr.
template <typename T>
Tape<T>* active_tape();

/// Makes a tape active for the current thread within a scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording within a scope.
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// backward() followed by gradients().
template <typename T>
GradientMap<T> backward(Tape<T>& tape, const BasicTensor<T>& loss) {
  tape.backward(loss);
  return tape.gradients();
}

namespace detail {

/// True when an op over these inputs must be recorded.
template <typename T>
bool should_record(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Gradient buffer of an input, or nullptr when it does not want one.
template <typename T>
T* grad_target(const BasicTensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  auto& impl = *t.impl();
  if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), T(0));
  return impl.grad.data();
}

}  // namespace detail

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ceimven
