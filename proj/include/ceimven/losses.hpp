// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ceimven/tensor.hpp"

namespace ceimven {

/// Added inside the log so a zero probability yields a large finite loss.
inline constexpr double kLogEpsilon = 1e-12;

/// -mean(log(probs[i, labels[i]] + 1e-12)) over rows of [n, k] probabilities.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, const std::vector<int>& labels);

/// Smooth-L1 between pred and target ([n, d] each), averaged over the
/// coordinates of rows whose mask entry is set. Rows with mask 0 contribute
/// neither value nor gradient; with no active row the result is 0.
/// `target` is treated as a constant.
template <typename T>
BasicTensor<T> masked_smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                const std::vector<bool>& mask, double beta = 1.0);

}  // namespace ceimven
