// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "ceimven/ops.hpp"
#include "ceimven/tensor.hpp"

namespace ceimven {

enum class Padding { kSame, kValid };
enum class Mode { kTrain, kEval };
enum class Activation { kNone, kRelu, kSilu, kSigmoid, kSoftmax };

std::string_view activation_name(Activation kind);
Activation activation_from_name(std::string_view name);

/// Output size and leading pad of one spatial axis. 'same' pads so the output
/// is ceil(in / stride), splitting odd padding with the extra cell at the end.
struct ConvAxis {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};
ConvAxis conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

template <typename T>
struct ConvParams {
  std::size_t filters = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::kSame;
  BasicTensor<T> weights;  // [kh, kw, in_ch, filters]
  BasicTensor<T> bias;     // [filters] or undefined
};

/// x [n,h,w,c] (*) weights [kh,kw,c,f] -> [n,h',w',f]. `bias` may be undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, std::size_t stride_h, std::size_t stride_w,
                      Padding padding);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  if (p.weights.rank() != 4 || p.weights.dim(0) != p.kernel_h || p.weights.dim(1) != p.kernel_w ||
      p.weights.dim(3) != p.filters) {
    throw ShapeError("conv2d: weights " + shape_str(p.weights.shape()) +
                     " inconsistent with declared kernel/filters");
  }
  return conv2d(x, p.weights, p.bias, p.stride_h, p.stride_w, p.padding);
}

/// One filter per channel: weights [kh,kw,c,1].
template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                                std::size_t stride_h, std::size_t stride_w, Padding padding);

/// Adds b [c] along the last axis of x.
template <typename T>
BasicTensor<T> bias_add(const BasicTensor<T>& x, const BasicTensor<T>& b);

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;  // state, not a parameter
  BasicTensor<T> running_var;   // state, not a parameter

  static BatchNormParams identity(std::size_t channels) {
    return {BasicTensor<T>::ones({channels}), BasicTensor<T>::zeros({channels}),
            BasicTensor<T>::zeros({channels}), BasicTensor<T>::ones({channels})};
  }
};

struct BatchNormOptions {
  double momentum = 0.99;
  double epsilon = 1e-3;
};

/// Normalizes the last axis over (n,h,w). Train mode uses batch statistics
/// and updates the running state as m*running + (1-m)*batch; eval mode uses
/// the running state.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BatchNormParams<T>& p, Mode mode,
                          BatchNormOptions options = {});

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
/// Softmax along `axis`; negative axes count from the end.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis = -1);

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& x, int axis = -1);

/// [n,h,w,c] -> [n,c]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// Inverted dropout. Eval mode and rate 0 return `x` itself.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::uint64_t seed);

/// x [n,d] . W [d,u] + b [u], then the optional activation.
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias, Activation act = Activation::kNone);

/// x [n,h,w,c] scaled per (n,c) by gate [n,c].
template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& gate);

template <typename T>
struct SqueezeExciteParams {
  BasicTensor<T> reduce_w;  // [c, r]
  BasicTensor<T> reduce_b;  // [r]
  BasicTensor<T> expand_w;  // [r, c]
  BasicTensor<T> expand_b;  // [c]
};

/// max(1, round(channels * ratio))
std::size_t se_reduced_width(std::size_t channels, double ratio);

/// x * sigmoid(dense(silu(dense(gap(x))))) per channel.
template <typename T>
BasicTensor<T> squeeze_excite(const BasicTensor<T>& x, const SqueezeExciteParams<T>& p);

enum class BlockKind { kMBConv, kFusedMBConv };

std::string_view block_kind_name(BlockKind kind);

struct BlockConfig {
  BlockKind kind = BlockKind::kMBConv;
  double expansion_ratio = 1.0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  double se_ratio = 0.0;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t repeats = 1;

  bool has_skip() const { return stride_h == 1 && stride_w == 1 && in_ch == out_ch; }
  std::size_t expanded_channels() const;
  bool has_expansion() const { return expanded_channels() != in_ch; }
  bool has_se() const { return se_ratio > 0.0; }
};

template <typename T>
struct ConvBnParams {
  BasicTensor<T> kernel;  // [kh, kw, in, out]; depthwise [kh, kw, c, 1]
  BatchNormParams<T> bn;
};

/// Parameters of one MBConv / Fused-MBConv block.
///
/// MBConv: expand (1x1, absent at ratio 1) -> depthwise -> SE -> project (1x1).
/// Fused:  expand (kxk, absent at ratio 1) -> SE -> project (1x1). At ratio 1
///         the project slot holds the single kxk convolution instead.
template <typename T>
struct BlockParams {
  std::optional<ConvBnParams<T>> expand;
  std::optional<ConvBnParams<T>> depthwise;
  std::optional<SqueezeExciteParams<T>> se;
  ConvBnParams<T> project;
};

/// Freshly initialized block parameters (He-uniform kernels, identity
/// batch-norm), one independent stream per tensor.
template <typename T>
BlockParams<T> make_block_params(const BlockConfig& cfg, std::uint64_t seed);

template <typename T>
BasicTensor<T> mbconv_block(const BasicTensor<T>& x, const BlockConfig& cfg, BlockParams<T>& params,
                            Mode mode, BatchNormOptions bn = {});

template <typename T>
BasicTensor<T> fused_mbconv_block(const BasicTensor<T>& x, const BlockConfig& cfg,
                                  BlockParams<T>& params, Mode mode, BatchNormOptions bn = {});

/// Dispatches on cfg.kind.
template <typename T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, const BlockConfig& cfg, BlockParams<T>& params,
                             Mode mode, BatchNormOptions bn = {});

}  // namespace ceimven
