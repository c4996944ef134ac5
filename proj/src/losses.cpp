// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/losses.hpp"

#include <cmath>

#include "ceimven/error.hpp"
#include "ceimven/tape.hpp"

namespace ceimven {

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy: probs must be [n,k], got " + shape_str(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  if (n == 0) throw ValueError("cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ValueError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
  }
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total -= std::log(static_cast<double>(p[i * k + labels[i]]) + kLogEpsilon);
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  if (detail::should_record<T>({&probs})) {
    active_tape<T>()->record(OpKind::kCrossEntropy, {probs}, result, [probs, labels, n, k](std::span<const T> g) {
      T* gp = detail::grad_target(probs);
      const auto pd = probs.data();
      const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = i * k + labels[i];
        gp[at] += static_cast<T>(-scale / (static_cast<double>(pd[at]) + kLogEpsilon));
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> masked_smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                const std::vector<bool>& mask, double beta) {
  if (pred.rank() != 2 || pred.shape() != target.shape()) {
    throw ShapeError("masked_smooth_l1: pred " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  if (mask.size() != pred.dim(0)) throw ShapeError("masked_smooth_l1: mask length differs from rows");
  if (!(beta > 0.0)) throw ValueError("masked_smooth_l1: beta must be positive");
  const std::size_t n = pred.dim(0), d = pred.dim(1);
  std::size_t active = 0;
  for (bool m : mask) active += m ? 1 : 0;
  const double count = static_cast<double>(active * d);
  const auto p = pred.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(p[i * d + j]) - static_cast<double>(t[i * d + j]);
      const double a = std::abs(diff);
      total += a < beta ? 0.5 * diff * diff / beta : a - 0.5 * beta;
    }
  }
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(active == 0 ? 0.0 : total / count));
  if (active > 0 && detail::should_record<T>({&pred})) {
    active_tape<T>()->record(OpKind::kSmoothL1, {pred}, result,
                             [pred, target, mask, beta, count, n, d](std::span<const T> g) {
      T* gp = detail::grad_target(pred);
      const auto pd = pred.data();
      const auto td = target.data();
      const double scale = static_cast<double>(g[0]) / count;
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = static_cast<double>(pd[i * d + j]) - static_cast<double>(td[i * d + j]);
          const double slope = std::abs(diff) < beta ? diff / beta : (diff > 0 ? 1.0 : -1.0);
          gp[i * d + j] += static_cast<T>(scale * slope);
        }
      }
    });
  }
  return result;
}

#define CEIMVEN_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, const std::vector<int>&);         \
  template BasicTensor<T> masked_smooth_l1(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                           const std::vector<bool>&, double);

CEIMVEN_INSTANTIATE(float)
CEIMVEN_INSTANTIATE(double)
#undef CEIMVEN_INSTANTIATE

}  // namespace ceimven
