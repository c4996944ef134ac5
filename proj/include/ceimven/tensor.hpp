// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ceimven {

using Shape = std::vector<std::size_t>;

/// Element count of a shape; the empty shape is a scalar with one element.
std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace init {
struct Zeros {};
struct Ones {};
struct Constant {
  double value;
};
/// Uniform on [lo, hi), bit-reproducible for a fixed seed.
struct Uniform {
  double lo;
  double hi;
  std::uint64_t seed;
};
/// He-uniform: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
struct Kaiming {
  std::size_t fan_in;
  std::uint64_t seed;
};
template <typename T>
struct Explicit {
  std::vector<T> data;
};
}  // namespace init

template <typename T>
using Init = std::variant<init::Zeros, init::Ones, init::Constant, init::Uniform,
                          init::Kaiming, init::Explicit<T>>;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is written
  bool requires_grad = false;
  std::uint64_t id = 0;
};

std::uint64_t next_tensor_id();

/// Dense row-major n-dimensional array. Copies of a BasicTensor share storage;
/// use clone() for an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor create(Shape shape, const Init<T>& init);
  static BasicTensor zeros(Shape shape) { return create(std::move(shape), init::Zeros{}); }
  static BasicTensor ones(Shape shape) { return create(std::move(shape), init::Ones{}); }
  static BasicTensor full(Shape shape, double value) {
    return create(std::move(shape), init::Constant{value});
  }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }
  std::uint64_t id() const { return impl_->id; }

  std::span<const T> data() const { return impl_->data; }
  /// Write access for initialization and optimizer updates of leaf tensors.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Empty span when no gradient has been written yet.
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> mutable_grad();
  void zero_grad();

  /// Deep copy with a fresh identity; gradient state is not copied.
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return BasicTensor<U>(impl_->shape, std::move(out));
  }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace ceimven
