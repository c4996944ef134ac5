// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/ops.hpp"

#include <cmath>

namespace ceimven {

namespace {

template <typename T>
bool is_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() != b.shape() && b.numel() == 1;
}

template <typename T>
void check_elementwise(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() == b.shape() || b.numel() == 1) return;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

enum class Elementwise { kAdd, kSub, kMul };

template <typename T>
BasicTensor<T> elementwise(Elementwise op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_elementwise(op == Elementwise::kAdd ? "add" : op == Elementwise::kSub ? "sub" : "mul", a,
                    b);
  const bool bcast = is_broadcast(a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const T bv = bcast ? bd[0] : bd[i];
    switch (op) {
      case Elementwise::kAdd: out[i] = ad[i] + bv; break;
      case Elementwise::kSub: out[i] = ad[i] - bv; break;
      case Elementwise::kMul: out[i] = ad[i] * bv; break;
    }
  }
  BasicTensor<T> result(a.shape(), std::move(out));
  if (detail::should_record<T>({&a, &b})) {
    const OpKind kind = op == Elementwise::kAdd   ? OpKind::kAdd
                        : op == Elementwise::kSub ? OpKind::kSub
                                                  : OpKind::kMul;
    active_tape<T>()->record(kind, {a, b}, result, [op, a, b, bcast](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      T* gb = detail::grad_target(b);
      const auto ad = a.data();
      const auto bd = b.data();
      double bsum = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T bv = bcast ? bd[0] : bd[i];
        T da, db;
        switch (op) {
          case Elementwise::kAdd: da = g[i]; db = g[i]; break;
          case Elementwise::kSub: da = g[i]; db = -g[i]; break;
          default: da = g[i] * bv; db = g[i] * ad[i]; break;
        }
        if (ga) ga[i] += da;
        if (gb) {
          if (bcast) {
            bsum += db;
          } else {
            gb[i] += db;
          }
        }
      }
      if (gb && bcast) gb[0] += static_cast<T>(bsum);
    });
  }
  return result;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(Elementwise::kAdd, a, b);
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(Elementwise::kSub, a, b);
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(Elementwise::kMul, a, b);
}

template <typename T>
BasicTensor<T> scalar_mul(const BasicTensor<T>& a, double s) {
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  const T st = static_cast<T>(s);
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * st;
  BasicTensor<T> result(a.shape(), std::move(out));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kScalarMul, {a}, result, [a, st](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * st;
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, double s) {
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  const T st = static_cast<T>(s);
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + st;
  BasicTensor<T> result(a.shape(), std::move(out));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kAddScalar, {a}, result, [a](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(m * n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const T* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<T>(acc[j]);
  }
  BasicTensor<T> result(Shape{m, n}, std::move(out));
  if (detail::should_record<T>({&a, &b})) {
    active_tape<T>()->record(OpKind::kMatMul, {a, b}, result, [a, b, m, k, n](std::span<const T> g) {
      const auto ad = a.data();
      const auto bd = b.data();
      if (T* ga = detail::grad_target(a)) {
        // dA = G B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(g[i * n + j]) * bd[p * n + j];
            ga[i * k + p] += static_cast<T>(s);
          }
        }
      }
      if (T* gb = detail::grad_target(b)) {
        // dB = A^T G
        std::vector<double> acc(k * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) acc[p * n + j] += av * g[i * n + j];
          }
        }
        for (std::size_t q = 0; q < k * n; ++q) gb[q] += static_cast<T>(acc[q]);
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  BasicTensor<T> result(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kReshape, {a}, result, [a](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto ad = a.data();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  BasicTensor<T> result(Shape{c, r}, std::move(out));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kTranspose2d, {a}, result, [a, r, c](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double s = 0.0;
  for (T v : a.data()) s += v;
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(s));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kSum, {a}, result, [a](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  double s = 0.0;
  for (T v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(s / n));
  if (detail::should_record<T>({&a})) {
    active_tape<T>()->record(OpKind::kMean, {a}, result, [a, n](std::span<const T> g) {
      T* ga = detail::grad_target(a);
      const T share = static_cast<T>(static_cast<double>(g[0]) / n);
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += share;
    });
  }
  return result;
}

double grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& function,
                  const std::vector<TensorD>& inputs, double eps) {
  if (!(eps > 0.0)) throw ValueError("grad_check: eps must be positive");
  std::vector<TensorD> xs;
  xs.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto x = in.clone();
    x.set_requires_grad(true);
    xs.push_back(x);
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    TensorD y = function(xs);
    if (y.numel() != 1) {
      throw ShapeError("grad_check: function output must be scalar, got " + shape_str(y.shape()));
    }
    tape.backward(y);
    for (const auto& x : xs) analytic.push_back(tape.gradient(x));
  }

  NoGradScope<double> no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto data = xs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double f_plus = function(xs).item();
      data[i] = saved - eps;
      const double f_minus = function(xs).item();
      data[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

double grad_check(const std::function<TensorD(const TensorD&)>& function, const TensorD& x,
                  double eps) {
  return grad_check([&](const std::vector<TensorD>& xs) { return function(xs[0]); },
                    std::vector<TensorD>{x}, eps);
}

#define CEIMVEN_INSTANTIATE(T)                                                   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> scalar_mul(const BasicTensor<T>&, double);             \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);             \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                 \
  template BasicTensor<T> transpose2d(const BasicTensor<T>&);                    \
  template BasicTensor<T> sum(const BasicTensor<T>&);                            \
  template BasicTensor<T> mean(const BasicTensor<T>&);

CEIMVEN_INSTANTIATE(float)
CEIMVEN_INSTANTIATE(double)
#undef CEIMVEN_INSTANTIATE

}  // namespace ceimven
