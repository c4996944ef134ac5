// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ceimven/error.hpp"
#include "ceimven/tape.hpp"
#include "ceimven/tensor.hpp"

namespace ceimven {

// Elementwise ops accept equal shapes, or a single-element `b` broadcast over `a`.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scalar_mul(const BasicTensor<T>& a, double s);
template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, double s);

/// [m,k] x [k,n] -> [m,n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Same data in a new shape; element order is preserved.
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& a);

/// Sum of all elements, shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);

/// Mean of all elements, shape [1].
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);

/// Max over elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// where numeric is the central difference with step eps. Both the analytic
/// gradient and every forward pass are evaluated in double precision.
double grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& function,
                  const std::vector<TensorD>& inputs, double eps);

/// Single-input convenience form.
double grad_check(const std::function<TensorD(const TensorD&)>& function, const TensorD& x,
                  double eps);

}  // namespace ceimven
