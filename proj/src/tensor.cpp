// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "ceimven/error.hpp"
#include "ceimven/rng.hpp"

namespace ceimven {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->id = next_tensor_id();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::create(Shape shape, const Init<T>& init) {
  check_shape(shape);
  const std::size_t n = shape_numel(shape);
  std::vector<T> data;
  if (const auto* ex = std::get_if<init::Explicit<T>>(&init)) {
    data = ex->data;
  } else if (std::holds_alternative<init::Zeros>(init)) {
    data.assign(n, T(0));
  } else if (std::holds_alternative<init::Ones>(init)) {
    data.assign(n, T(1));
  } else if (const auto* c = std::get_if<init::Constant>(&init)) {
    data.assign(n, static_cast<T>(c->value));
  } else if (const auto* u = std::get_if<init::Uniform>(&init)) {
    Rng rng(u->seed);
    data.resize(n);
    for (auto& v : data) v = static_cast<T>(rng.uniform(u->lo, u->hi));
  } else if (const auto* k = std::get_if<init::Kaiming>(&init)) {
    if (k->fan_in == 0) throw ValueError("kaiming init needs fan_in >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(k->fan_in));
    Rng rng(k->seed);
    data.resize(n);
    for (auto& v : data) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  return BasicTensor(std::move(shape), std::move(data));
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(impl_->shape, impl_->data);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace ceimven
