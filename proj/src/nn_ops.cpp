// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ceimven/rng.hpp"

namespace ceimven {

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::kNone: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kSilu: return "silu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "linear";
}

Activation activation_from_name(std::string_view name) {
  if (name == "linear") return Activation::kNone;
  if (name == "relu") return Activation::kRelu;
  if (name == "silu") return Activation::kSilu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "softmax") return Activation::kSoftmax;
  throw ValueError("unknown activation '" + std::string(name) + "'");
}

std::string_view block_kind_name(BlockKind kind) {
  return kind == BlockKind::kMBConv ? "mbconv" : "fused_mbconv";
}

ConvAxis conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv: kernel and stride must be positive");
  ConvAxis axis;
  if (padding == Padding::kSame) {
    axis.out = (in + stride - 1) / stride;
    const std::size_t needed = (axis.out - 1) * stride + kernel;
    axis.pad_before = needed > in ? (needed - in) / 2 : 0;
  } else {
    if (kernel > in) {
      throw ShapeError("conv: kernel " + std::to_string(kernel) + " larger than input " +
                       std::to_string(in));
    }
    axis.out = (in - kernel) / stride + 1;
  }
  return axis;
}

namespace {

void require_rank4(const char* op, const Shape& s) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected [n,h,w,c], got " + shape_str(s));
}

// Input row index for output index o and kernel tap k, or -1 in the padding.
inline long tap_index(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
                      std::size_t in) {
  const long i = static_cast<long>(o * stride + k) - static_cast<long>(pad);
  return (i < 0 || i >= static_cast<long>(in)) ? -1 : i;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, std::size_t stride_h, std::size_t stride_w,
                      Padding padding) {
  require_rank4("conv2d", x.shape());
  require_rank4("conv2d weights", weights.shape());
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), f = weights.dim(3);
  if (weights.dim(2) != c) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels but weights " +
                     shape_str(weights.shape()) + " expect " + std::to_string(weights.dim(2)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != f)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(f) + " filters");
  }
  const ConvAxis ay = conv_axis(h, kh, stride_h, padding);
  const ConvAxis ax = conv_axis(w, kw, stride_w, padding);
  const std::size_t oh = ay.out, ow = ax.out;

  const T* xd = x.data().data();
  const T* wd = weights.data().data();
  const T* bd = bias.defined() ? bias.data().data() : nullptr;
  std::vector<T> out(n * oh * ow * f);
  std::vector<double> acc(f);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        if (bd) {
          for (std::size_t j = 0; j < f; ++j) acc[j] = bd[j];
        } else {
          std::fill(acc.begin(), acc.end(), 0.0);
        }
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = tap_index(oy, ky, stride_h, ay.pad_before, h);
          if (iy < 0) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = tap_index(ox, kx, stride_w, ax.pad_before, w);
            if (ix < 0) continue;
            const T* xrow = xd + ((b * h + iy) * w + ix) * c;
            const T* wtap = wd + (ky * kw + kx) * c * f;
            for (std::size_t ci = 0; ci < c; ++ci) {
              const double xv = xrow[ci];
              if (xv == 0.0) continue;
              const T* wrow = wtap + ci * f;
              for (std::size_t j = 0; j < f; ++j) acc[j] += xv * wrow[j];
            }
          }
        }
        T* orow = out.data() + ((b * oh + oy) * ow + ox) * f;
        for (std::size_t j = 0; j < f; ++j) orow[j] = static_cast<T>(acc[j]);
      }
    }
  }
  BasicTensor<T> result(Shape{n, oh, ow, f}, std::move(out));
  if (detail::should_record<T>({&x, &weights, &bias})) {
    std::vector<BasicTensor<T>> inputs{x, weights};
    if (bias.defined()) inputs.push_back(bias);
    active_tape<T>()->record(
        OpKind::kConv2d, inputs, result,
        [=](std::span<const T> g) {
          T* gx = detail::grad_target(x);
          T* gw = detail::grad_target(weights);
          T* gb = bias.defined() ? detail::grad_target(bias) : nullptr;
          const T* xd = x.data().data();
          const T* wd = weights.data().data();
          std::vector<double> dw(gw ? kh * kw * c * f : 0, 0.0);
          std::vector<double> db(gb ? f : 0, 0.0);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const T* grow = g.data() + ((b * oh + oy) * ow + ox) * f;
                if (gb) {
                  for (std::size_t j = 0; j < f; ++j) db[j] += grow[j];
                }
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  const long iy = tap_index(oy, ky, stride_h, ay.pad_before, h);
                  if (iy < 0) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const long ix = tap_index(ox, kx, stride_w, ax.pad_before, w);
                    if (ix < 0) continue;
                    const std::size_t xoff = ((b * h + iy) * w + ix) * c;
                    const std::size_t tap = (ky * kw + kx) * c * f;
                    for (std::size_t ci = 0; ci < c; ++ci) {
                      if (gx) {
                        const T* wrow = wd + tap + ci * f;
                        double s = 0.0;
                        for (std::size_t j = 0; j < f; ++j) s += static_cast<double>(wrow[j]) * grow[j];
                        gx[xoff + ci] += static_cast<T>(s);
                      }
                      if (gw) {
                        const double xv = xd[xoff + ci];
                        if (xv == 0.0) continue;
                        double* drow = dw.data() + tap + ci * f;
                        for (std::size_t j = 0; j < f; ++j) drow[j] += xv * grow[j];
                      }
                    }
                  }
                }
              }
            }
          }
          if (gw) {
            for (std::size_t q = 0; q < dw.size(); ++q) gw[q] += static_cast<T>(dw[q]);
          }
          if (gb) {
            for (std::size_t j = 0; j < f; ++j) gb[j] += static_cast<T>(db[j]);
          }
        });
  }
  return result;
}

template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                                std::size_t stride_h, std::size_t stride_w, Padding padding) {
  require_rank4("depthwise_conv2d", x.shape());
  require_rank4("depthwise_conv2d weights", weights.shape());
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1);
  if (weights.dim(2) != c || weights.dim(3) != 1) {
    throw ShapeError("depthwise_conv2d: weights " + shape_str(weights.shape()) +
                     " do not match " + std::to_string(c) + " input channels");
  }
  const ConvAxis ay = conv_axis(h, kh, stride_h, padding);
  const ConvAxis ax = conv_axis(w, kw, stride_w, padding);
  const std::size_t oh = ay.out, ow = ax.out;
  const T* xd = x.data().data();
  const T* wd = weights.data().data();
  std::vector<T> out(n * oh * ow * c);
  std::vector<double> acc(c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = tap_index(oy, ky, stride_h, ay.pad_before, h);
          if (iy < 0) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = tap_index(ox, kx, stride_w, ax.pad_before, w);
            if (ix < 0) continue;
            const T* xrow = xd + ((b * h + iy) * w + ix) * c;
            const T* wrow = wd + (ky * kw + kx) * c;
            for (std::size_t ci = 0; ci < c; ++ci) acc[ci] += static_cast<double>(xrow[ci]) * wrow[ci];
          }
        }
        T* orow = out.data() + ((b * oh + oy) * ow + ox) * c;
        for (std::size_t ci = 0; ci < c; ++ci) orow[ci] = static_cast<T>(acc[ci]);
      }
    }
  }
  BasicTensor<T> result(Shape{n, oh, ow, c}, std::move(out));
  if (detail::should_record<T>({&x, &weights})) {
    active_tape<T>()->record(OpKind::kDepthwiseConv2d, {x, weights}, result, [=](std::span<const T> g) {
      T* gx = detail::grad_target(x);
      T* gw = detail::grad_target(weights);
      const T* xd = x.data().data();
      const T* wd = weights.data().data();
      std::vector<double> dw(gw ? kh * kw * c : 0, 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* grow = g.data() + ((b * oh + oy) * ow + ox) * c;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const long iy = tap_index(oy, ky, stride_h, ay.pad_before, h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long ix = tap_index(ox, kx, stride_w, ax.pad_before, w);
                if (ix < 0) continue;
                const std::size_t xoff = ((b * h + iy) * w + ix) * c;
                const std::size_t tap = (ky * kw + kx) * c;
                if (gx) {
                  for (std::size_t ci = 0; ci < c; ++ci) gx[xoff + ci] += wd[tap + ci] * grow[ci];
                }
                if (gw) {
                  for (std::size_t ci = 0; ci < c; ++ci)
                    dw[tap + ci] += static_cast<double>(xd[xoff + ci]) * grow[ci];
                }
              }
            }
          }
        }
      }
      if (gw) {
        for (std::size_t q = 0; q < dw.size(); ++q) gw[q] += static_cast<T>(dw[q]);
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> bias_add(const BasicTensor<T>& x, const BasicTensor<T>& b) {
  const std::size_t c = x.shape().back();
  if (b.rank() != 1 || b.dim(0) != c) {
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  }
  const auto xd = x.data();
  const auto bd = b.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] + bd[i % c];
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x, &b})) {
    active_tape<T>()->record(OpKind::kBiasAdd, {x, b}, result, [x, b, c](std::span<const T> g) {
      if (T* gx = detail::grad_target(x)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (T* gb = detail::grad_target(b)) {
        std::vector<double> acc(c, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i];
        for (std::size_t j = 0; j < c; ++j) gb[j] += static_cast<T>(acc[j]);
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BatchNormParams<T>& p, Mode mode,
                          BatchNormOptions options) {
  if (!(options.epsilon > 0.0)) throw ValueError("batch_norm: epsilon must be positive");
  const std::size_t c = x.shape().back();
  for (const auto* t : {&p.gamma, &p.beta, &p.running_mean, &p.running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw ShapeError("batch_norm: parameter " + shape_str(t->shape()) + " vs input channels " +
                       std::to_string(c));
    }
  }
  const std::size_t m = x.numel() / c;
  const auto xd = x.data();
  std::vector<double> mu(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::kTrain) {
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < xd.size(); ++i) mu[i % c] += xd[i];
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const double d = xd[i] - mu[i % c];
      var[i % c] += d * d;
    }
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(m);
      inv_std[j] = 1.0 / std::sqrt(var[j] + options.epsilon);
      rm[j] = static_cast<T>(options.momentum * rm[j] + (1.0 - options.momentum) * mu[j]);
      rv[j] = static_cast<T>(options.momentum * rv[j] + (1.0 - options.momentum) * var[j]);
    }
  } else {
    const auto rm = p.running_mean.data();
    const auto rv = p.running_var.data();
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = rm[j];
      inv_std[j] = 1.0 / std::sqrt(static_cast<double>(rv[j]) + options.epsilon);
    }
  }
  const auto gd = p.gamma.data();
  const auto bd = p.beta.data();
  std::vector<T> xhat(xd.size());
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const std::size_t j = i % c;
    const double xh = (xd[i] - mu[j]) * inv_std[j];
    xhat[i] = static_cast<T>(xh);
    out[i] = static_cast<T>(gd[j] * xh + bd[j]);
  }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x, &p.gamma, &p.beta})) {
    const BasicTensor<T> gamma = p.gamma;
    const BasicTensor<T> beta = p.beta;
    active_tape<T>()->record(
        OpKind::kBatchNorm, {x, gamma, beta}, result,
        [x, gamma, beta, c, m, mode, inv_std, xhat = std::move(xhat)](std::span<const T> g) {
          std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            sum_g[i % c] += g[i];
            sum_gx[i % c] += static_cast<double>(g[i]) * xhat[i];
          }
          const auto gd = gamma.data();
          if (T* gx = detail::grad_target(x)) {
            if (mode == Mode::kTrain) {
              const double md = static_cast<double>(m);
              for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t j = i % c;
                gx[i] += static_cast<T>(gd[j] * inv_std[j] / md *
                                        (md * g[i] - sum_g[j] - xhat[i] * sum_gx[j]));
              }
            } else {
              for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t j = i % c;
                gx[i] += static_cast<T>(g[i] * gd[j] * inv_std[j]);
              }
            }
          }
          if (T* gg = detail::grad_target(gamma)) {
            for (std::size_t j = 0; j < c; ++j) gg[j] += static_cast<T>(sum_gx[j]);
          }
          if (T* gb = detail::grad_target(beta)) {
            for (std::size_t j = 0; j < c; ++j) gb[j] += static_cast<T>(sum_g[j]);
          }
        });
  }
  return result;
}

namespace {

enum class Pointwise { kRelu, kSilu, kSigmoid };

inline double sigmoid_of(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

template <typename T>
BasicTensor<T> pointwise(Pointwise kind, const BasicTensor<T>& x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    switch (kind) {
      case Pointwise::kRelu: out[i] = v > 0.0 ? xd[i] : T(0); break;
      case Pointwise::kSilu: out[i] = static_cast<T>(v * sigmoid_of(v)); break;
      case Pointwise::kSigmoid: out[i] = static_cast<T>(sigmoid_of(v)); break;
    }
  }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    const OpKind op = kind == Pointwise::kRelu   ? OpKind::kRelu
                      : kind == Pointwise::kSilu ? OpKind::kSilu
                                                 : OpKind::kSigmoid;
    const BasicTensor<T> y = result;
    active_tape<T>()->record(op, {x}, result, [kind, x, yi = y.impl()](std::span<const T> g) {
      T* gx = detail::grad_target(x);
      const auto xd = x.data();
      const auto& yd = yi->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d;
        switch (kind) {
          case Pointwise::kRelu: d = xd[i] > T(0) ? 1.0 : 0.0; break;
          case Pointwise::kSilu: {
            const double s = sigmoid_of(xd[i]);
            d = s * (1.0 + xd[i] * (1.0 - s));
            break;
          }
          default: d = static_cast<double>(yd[i]) * (1.0 - yd[i]); break;
        }
        gx[i] += static_cast<T>(g[i] * d);
      }
    });
  }
  return result;
}

}  // namespace

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return pointwise(Pointwise::kRelu, x);
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  return pointwise(Pointwise::kSilu, x);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return pointwise(Pointwise::kSigmoid, x);
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (int i = ax + 1; i < rank; ++i) inner *= s[i];
  const std::size_t len = s[ax];
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xd[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, static_cast<double>(xd[base + k * inner]));
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        e[k] = std::exp(static_cast<double>(xd[base + k * inner]) - mx);
        total += e[k];
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = static_cast<T>(e[k] / total);
    }
  }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    active_tape<T>()->record(
        OpKind::kSoftmax, {x}, result,
        [x, yi = result.impl(), outer, inner, len](std::span<const T> g) {
          T* gx = detail::grad_target(x);
          const auto& yd = yi->data;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
              const std::size_t base = o * len * inner + in;
              double dot = 0.0;
              for (std::size_t k = 0; k < len; ++k)
                dot += static_cast<double>(g[base + k * inner]) * yd[base + k * inner];
              for (std::size_t k = 0; k < len; ++k) {
                const std::size_t i = base + k * inner;
                gx[i] += static_cast<T>(yd[i] * (g[i] - dot));
              }
            }
          }
        });
  }
  return result;
}

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& x, int axis) {
  switch (kind) {
    case Activation::kNone: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kSilu: return silu(x);
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kSoftmax: return softmax(x, axis);
  }
  return x;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank4("global_avg_pool", x.shape());
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  const auto xd = x.data();
  std::vector<T> out(n * c);
  std::vector<double> acc(c);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
      const T* row = xd.data() + (b * hw + p) * c;
      for (std::size_t j = 0; j < c; ++j) acc[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[b * c + j] = static_cast<T>(acc[j] / static_cast<double>(hw));
  }
  BasicTensor<T> result(Shape{n, c}, std::move(out));
  if (detail::should_record<T>({&x})) {
    active_tape<T>()->record(OpKind::kGlobalAvgPool, {x}, result, [x, n, hw, c](std::span<const T> g) {
      T* gx = detail::grad_target(x);
      const double scale = 1.0 / static_cast<double>(hw);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t j = 0; j < c; ++j)
            gx[(b * hw + p) * c + j] += static_cast<T>(g[b * c + j] * scale);
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ValueError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  const auto xd = x.data();
  const double scale = 1.0 / (1.0 - rate);
  std::vector<T> mask(xd.size());
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const bool keep = unit_interval(derive_seed(seed, static_cast<std::uint64_t>(i))) >= rate;
    mask[i] = keep ? static_cast<T>(scale) : T(0);
    out[i] = xd[i] * mask[i];
  }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    active_tape<T>()->record(OpKind::kDropout, {x}, result, [x, mask = std::move(mask)](std::span<const T> g) {
      T* gx = detail::grad_target(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias, Activation act) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(0)) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weights " +
                     shape_str(weights.shape()));
  }
  BasicTensor<T> y = matmul(x, weights);
  if (bias.defined()) y = bias_add(y, bias);
  return activation(act, y, -1);
}

template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& gate) {
  require_rank4("scale_channels", x.shape());
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  if (gate.rank() != 2 || gate.dim(0) != n || gate.dim(1) != c) {
    throw ShapeError("scale_channels: gate " + shape_str(gate.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  const auto xd = x.data();
  const auto gd = gate.data();
  std::vector<T> out(xd.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t i = (b * hw + p) * c + j;
        out[i] = xd[i] * gd[b * c + j];
      }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (detail::should_record<T>({&x, &gate})) {
    active_tape<T>()->record(OpKind::kScaleChannels, {x, gate}, result, [x, gate, n, hw, c](std::span<const T> g) {
      T* gx = detail::grad_target(x);
      T* gg = detail::grad_target(gate);
      const auto xd = x.data();
      const auto gd = gate.data();
      std::vector<double> acc(gg ? n * c : 0, 0.0);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t i = (b * hw + p) * c + j;
            if (gx) gx[i] += g[i] * gd[b * c + j];
            if (gg) acc[b * c + j] += static_cast<double>(g[i]) * xd[i];
          }
      for (std::size_t q = 0; q < acc.size(); ++q) gg[q] += static_cast<T>(acc[q]);
    });
  }
  return result;
}

std::size_t se_reduced_width(std::size_t channels, double ratio) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(channels) * ratio)));
}

template <typename T>
BasicTensor<T> squeeze_excite(const BasicTensor<T>& x, const SqueezeExciteParams<T>& p) {
  require_rank4("squeeze_excite", x.shape());
  const std::size_t c = x.dim(3);
  if (p.reduce_w.rank() != 2 || p.reduce_w.dim(0) != c || p.expand_w.rank() != 2 ||
      p.expand_w.dim(1) != c || p.expand_w.dim(0) != p.reduce_w.dim(1)) {
    throw ShapeError("squeeze_excite: parameters " + shape_str(p.reduce_w.shape()) + "/" +
                     shape_str(p.expand_w.shape()) + " do not fit " + std::to_string(c) + " channels");
  }
  BasicTensor<T> s = global_avg_pool(x);
  s = dense(s, p.reduce_w, p.reduce_b, Activation::kSilu);
  s = dense(s, p.expand_w, p.expand_b, Activation::kSigmoid);
  return scale_channels(x, s);
}

std::size_t BlockConfig::expanded_channels() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(in_ch) * expansion_ratio));
}

template <typename T>
BlockParams<T> make_block_params(const BlockConfig& cfg, std::uint64_t seed) {
  if (cfg.in_ch == 0 || cfg.out_ch == 0 || cfg.expansion_ratio < 1.0) {
    throw ValueError("block config needs positive channels and expansion_ratio >= 1");
  }
  const std::size_t kh = cfg.kernel_h, kw = cfg.kernel_w;
  const std::size_t mid = cfg.expanded_channels();
  auto kernel = [&](std::string_view stream, Shape shape, std::size_t fan_in) {
    return BasicTensor<T>::create(std::move(shape), init::Kaiming{fan_in, derive_seed(seed, stream)});
  };
  BlockParams<T> p;
  const bool fused = cfg.kind == BlockKind::kFusedMBConv;
  if (cfg.has_expansion()) {
    const std::size_t k_h = fused ? kh : 1, k_w = fused ? kw : 1;
    p.expand = ConvBnParams<T>{kernel("expand", {k_h, k_w, cfg.in_ch, mid}, k_h * k_w * cfg.in_ch),
                               BatchNormParams<T>::identity(mid)};
  }
  if (!fused) {
    p.depthwise = ConvBnParams<T>{kernel("depthwise", {kh, kw, mid, 1}, kh * kw),
                                  BatchNormParams<T>::identity(mid)};
  }
  if (cfg.has_se()) {
    const std::size_t r = se_reduced_width(cfg.in_ch, cfg.se_ratio);
    p.se = SqueezeExciteParams<T>{kernel("se_reduce", {mid, r}, mid), BasicTensor<T>::zeros({r}),
                                  kernel("se_expand", {r, mid}, r), BasicTensor<T>::zeros({mid})};
  }
  if (fused && !cfg.has_expansion()) {
    p.project = ConvBnParams<T>{kernel("project", {kh, kw, cfg.in_ch, cfg.out_ch}, kh * kw * cfg.in_ch),
                                BatchNormParams<T>::identity(cfg.out_ch)};
  } else {
    p.project = ConvBnParams<T>{kernel("project", {1, 1, mid, cfg.out_ch}, mid),
                                BatchNormParams<T>::identity(cfg.out_ch)};
  }
  return p;
}

namespace {

void check_block_input(const char* op, const Shape& s, const BlockConfig& cfg) {
  require_rank4(op, s);
  if (s[3] != cfg.in_ch) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(s[3]) +
                     " channels, config declares " + std::to_string(cfg.in_ch));
  }
}

template <typename T>
void check_kernel(const char* op, const char* slot, const BasicTensor<T>& k, const Shape& expect) {
  if (k.shape() != expect) {
    throw ShapeError(std::string(op) + ": " + slot + " kernel " + shape_str(k.shape()) +
                     " does not match config " + shape_str(expect));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> mbconv_block(const BasicTensor<T>& x, const BlockConfig& cfg, BlockParams<T>& params,
                            Mode mode, BatchNormOptions bn) {
  if (cfg.kind != BlockKind::kMBConv) throw ValueError("mbconv_block: config kind is not mbconv");
  check_block_input("mbconv_block", x.shape(), cfg);
  const std::size_t mid = cfg.expanded_channels();
  if (cfg.has_expansion() != params.expand.has_value() || !params.depthwise ||
      cfg.has_se() != params.se.has_value()) {
    throw ShapeError("mbconv_block: parameter set does not match block config");
  }
  BasicTensor<T> h = x;
  if (params.expand) {
    check_kernel("mbconv_block", "expand", params.expand->kernel, {1, 1, cfg.in_ch, mid});
    h = conv2d(h, params.expand->kernel, BasicTensor<T>{}, 1, 1, Padding::kSame);
    h = silu(batch_norm(h, params.expand->bn, mode, bn));
  }
  check_kernel("mbconv_block", "depthwise", params.depthwise->kernel, {cfg.kernel_h, cfg.kernel_w, mid, 1});
  h = depthwise_conv2d(h, params.depthwise->kernel, cfg.stride_h, cfg.stride_w, Padding::kSame);
  h = silu(batch_norm(h, params.depthwise->bn, mode, bn));
  if (params.se) h = squeeze_excite(h, *params.se);
  check_kernel("mbconv_block", "project", params.project.kernel, {1, 1, mid, cfg.out_ch});
  h = conv2d(h, params.project.kernel, BasicTensor<T>{}, 1, 1, Padding::kSame);
  h = batch_norm(h, params.project.bn, mode, bn);
  if (cfg.has_skip()) h = add(h, x);
  return h;
}

template <typename T>
BasicTensor<T> fused_mbconv_block(const BasicTensor<T>& x, const BlockConfig& cfg,
                                  BlockParams<T>& params, Mode mode, BatchNormOptions bn) {
  if (cfg.kind != BlockKind::kFusedMBConv) {
    throw ValueError("fused_mbconv_block: config kind is not fused_mbconv");
  }
  check_block_input("fused_mbconv_block", x.shape(), cfg);
  if (cfg.has_expansion() != params.expand.has_value() || params.depthwise ||
      cfg.has_se() != params.se.has_value()) {
    throw ShapeError("fused_mbconv_block: parameter set does not match block config");
  }
  BasicTensor<T> h = x;
  if (params.expand) {
    const std::size_t mid = cfg.expanded_channels();
    check_kernel("fused_mbconv_block", "expand", params.expand->kernel,
                 {cfg.kernel_h, cfg.kernel_w, cfg.in_ch, mid});
    h = conv2d(h, params.expand->kernel, BasicTensor<T>{}, cfg.stride_h, cfg.stride_w, Padding::kSame);
    h = silu(batch_norm(h, params.expand->bn, mode, bn));
    if (params.se) h = squeeze_excite(h, *params.se);
    check_kernel("fused_mbconv_block", "project", params.project.kernel, {1, 1, mid, cfg.out_ch});
    h = conv2d(h, params.project.kernel, BasicTensor<T>{}, 1, 1, Padding::kSame);
    h = batch_norm(h, params.project.bn, mode, bn);
  } else {
    check_kernel("fused_mbconv_block", "project", params.project.kernel,
                 {cfg.kernel_h, cfg.kernel_w, cfg.in_ch, cfg.out_ch});
    h = conv2d(h, params.project.kernel, BasicTensor<T>{}, cfg.stride_h, cfg.stride_w, Padding::kSame);
    h = silu(batch_norm(h, params.project.bn, mode, bn));
    if (params.se) h = squeeze_excite(h, *params.se);
  }
  if (cfg.has_skip()) h = add(h, x);
  return h;
}

template <typename T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, const BlockConfig& cfg, BlockParams<T>& params,
                             Mode mode, BatchNormOptions bn) {
  return cfg.kind == BlockKind::kMBConv ? mbconv_block(x, cfg, params, mode, bn)
                                        : fused_mbconv_block(x, cfg, params, mode, bn);
}

#define CEIMVEN_INSTANTIATE(T)                                                                     \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&, std::size_t, std::size_t, Padding);        \
  template BasicTensor<T> depthwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                           std::size_t, std::size_t, Padding);                     \
  template BasicTensor<T> bias_add(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, BatchNormParams<T>&, Mode,             \
                                     BatchNormOptions);                                            \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                             \
  template BasicTensor<T> silu(const BasicTensor<T>&);                                             \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                          \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                                     \
  template BasicTensor<T> activation(Activation, const BasicTensor<T>&, int);                      \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                  \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Mode, std::uint64_t);             \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                const BasicTensor<T>&, Activation);                                \
  template BasicTensor<T> scale_channels(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> squeeze_excite(const BasicTensor<T>&, const SqueezeExciteParams<T>&);    \
  template BlockParams<T> make_block_params<T>(const BlockConfig&, std::uint64_t);                 \
  template BasicTensor<T> mbconv_block(const BasicTensor<T>&, const BlockConfig&, BlockParams<T>&, \
                                       Mode, BatchNormOptions);                                    \
  template BasicTensor<T> fused_mbconv_block(const BasicTensor<T>&, const BlockConfig&,            \
                                             BlockParams<T>&, Mode, BatchNormOptions);             \
  template BasicTensor<T> block_forward(const BasicTensor<T>&, const BlockConfig&,                 \
                                        BlockParams<T>&, Mode, BatchNormOptions);

CEIMVEN_INSTANTIATE(float)
CEIMVEN_INSTANTIATE(double)
#undef CEIMVEN_INSTANTIATE

}  // namespace ceimven
