// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "grad_cases.hpp"

#include <cmath>

#include "ceimven/losses.hpp"
#include "ceimven/nn_ops.hpp"
#include "ceimven/ops.hpp"
#include "ceimven/rng.hpp"

namespace ceimven::testing {
namespace {

using Fn = std::function<TensorD(const std::vector<TensorD>&)>;

TensorD rand(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return TensorD::create(std::move(shape), init::Uniform{lo, hi, seed});
}

// Keeps samples clear of the kink at zero so central differences stay valid.
TensorD away_from_zero(TensorD t, double gap = 0.05) {
  for (auto& v : t.mutable_data()) v += v >= 0 ? gap : -gap;
  return t;
}

// Non-scalar outputs are contracted with fixed random weights, so every
// output element contributes a distinct term to the checked gradient.
TensorD contract(const TensorD& y, std::uint64_t seed) {
  return sum(mul(y, rand(y.shape(), derive_seed(seed, "weights"))));
}

double check(const Fn& f, const std::vector<TensorD>& xs) { return grad_check(f, xs, kGradEps); }

GradCase unary(std::string name, std::function<TensorD(const TensorD&)> op, Shape shape, bool kinked = false) {
  return {name, [=](std::uint64_t seed) {
            TensorD x = rand(shape, seed);
            if (kinked) x = away_from_zero(x);
            return check([&](const std::vector<TensorD>& v) { return contract(op(v[0]), seed); }, {x});
          }};
}

GradCase binary(std::string name, std::function<TensorD(const TensorD&, const TensorD&)> op, Shape a, Shape b) {
  return {name, [=](std::uint64_t seed) {
            return check([&](const std::vector<TensorD>& v) { return contract(op(v[0], v[1]), seed); },
                         {rand(a, seed), rand(b, derive_seed(seed, 1))});
          }};
}

// The tensors of a block in a fixed order, so grad_check can vary each one.
std::vector<TensorD*> block_tensors(BlockParams<double>& p) {
  std::vector<TensorD*> out;
  auto conv_bn = [&](ConvBnParams<double>& c) {
    out.push_back(&c.kernel);
    out.push_back(&c.bn.gamma);
    out.push_back(&c.bn.beta);
  };
  if (p.expand) conv_bn(*p.expand);
  if (p.depthwise) conv_bn(*p.depthwise);
  if (p.se) {
    out.insert(out.end(), {&p.se->reduce_w, &p.se->reduce_b, &p.se->expand_w, &p.se->expand_b});
  }
  conv_bn(p.project);
  return out;
}

GradCase block(std::string name, BlockConfig cfg) {
  return {name, [=](std::uint64_t seed) {
            BlockParams<double> base = make_block_params<double>(cfg, seed);
            std::vector<TensorD> inputs{rand({2, 5, 5, cfg.in_ch}, derive_seed(seed, "x"))};
            std::uint64_t k = 0;
            for (TensorD* t : block_tensors(base)) {
              // Identity batch-norm affine terms would make the check blind to
              // mixed-up gamma/beta gradients; randomize them.
              inputs.push_back(t->rank() == 1 ? rand(t->shape(), derive_seed(seed, ++k), 0.5, 1.5) : *t);
            }
            return check(
                [&](const std::vector<TensorD>& v) {
                  BlockParams<double> p = base;
                  auto slots = block_tensors(p);
                  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = v[i + 1];
                  return contract(block_forward(v[0], cfg, p, Mode::kTrain), seed);
                },
                inputs);
          }};
}

}  // namespace

std::vector<GradCase> grad_cases() {
  std::vector<GradCase> c;
  c.push_back(binary("add", [](auto& a, auto& b) { return add(a, b); }, {3, 4}, {3, 4}));
  c.push_back(binary("add_broadcast", [](auto& a, auto& b) { return add(a, b); }, {3, 4}, {1}));
  c.push_back(binary("sub", [](auto& a, auto& b) { return sub(a, b); }, {3, 4}, {3, 4}));
  c.push_back(binary("mul", [](auto& a, auto& b) { return mul(a, b); }, {3, 4}, {3, 4}));
  c.push_back(binary("mul_broadcast", [](auto& a, auto& b) { return mul(a, b); }, {2, 3}, {1}));
  c.push_back(unary("scalar_mul", [](auto& x) { return scalar_mul(x, -1.7); }, {3, 4}));
  c.push_back(unary("add_scalar", [](auto& x) { return add_scalar(x, 0.3); }, {3, 4}));
  c.push_back(binary("matmul", [](auto& a, auto& b) { return matmul(a, b); }, {3, 4}, {4, 5}));
  c.push_back(unary("reshape", [](auto& x) { return reshape(x, Shape{2, 6}); }, {3, 4}));
  c.push_back(unary("transpose2d", [](auto& x) { return transpose2d(x); }, {3, 4}));
  c.push_back(unary("sum", [](auto& x) { return sum(x); }, {3, 4}));
  c.push_back(unary("mean", [](auto& x) { return mean(x); }, {3, 4}));
  c.push_back(binary("bias_add", [](auto& x, auto& b) { return bias_add(x, b); }, {2, 3, 3, 4}, {4}));
  c.push_back({"conv2d_same_s1", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(conv2d(v[0], v[1], v[2], 1, 1, Padding::kSame), seed);
                     },
                     {rand({2, 5, 5, 3}, seed), rand({3, 3, 3, 4}, derive_seed(seed, 1)),
                      rand({4}, derive_seed(seed, 2))});
               }});
  c.push_back({"conv2d_same_s2_odd", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(conv2d(v[0], v[1], TensorD{}, 2, 2, Padding::kSame), seed);
                     },
                     {rand({1, 7, 6, 2}, seed), rand({3, 3, 2, 3}, derive_seed(seed, 1))});
               }});
  c.push_back({"conv2d_valid_s2", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(conv2d(v[0], v[1], v[2], 2, 2, Padding::kValid), seed);
                     },
                     {rand({2, 6, 6, 2}, seed), rand({2, 2, 2, 3}, derive_seed(seed, 1)),
                      rand({3}, derive_seed(seed, 2))});
               }});
  c.push_back(binary("depthwise_same_s1",
                     [](auto& x, auto& w) { return depthwise_conv2d(x, w, 1, 1, Padding::kSame); }, {2, 5, 5, 3},
                     {3, 3, 3, 1}));
  c.push_back(binary("depthwise_same_s2",
                     [](auto& x, auto& w) { return depthwise_conv2d(x, w, 2, 2, Padding::kSame); }, {1, 6, 7, 2},
                     {5, 5, 2, 1}));
  c.push_back({"batch_norm_train", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       BatchNormParams<double> p = BatchNormParams<double>::identity(3);
                       p.gamma = v[1];
                       p.beta = v[2];
                       return contract(batch_norm(v[0], p, Mode::kTrain), seed);
                     },
                     {rand({2, 3, 3, 3}, seed), rand({3}, derive_seed(seed, 1), 0.5, 1.5),
                      rand({3}, derive_seed(seed, 2))});
               }});
  c.push_back({"batch_norm_eval", [](std::uint64_t seed) {
                 const TensorD mean_ = rand({3}, derive_seed(seed, 3));
                 const TensorD var_ = rand({3}, derive_seed(seed, 4), 0.5, 2.0);
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       BatchNormParams<double> p{v[1], v[2], mean_, var_};
                       return contract(batch_norm(v[0], p, Mode::kEval), seed);
                     },
                     {rand({2, 3, 3, 3}, seed), rand({3}, derive_seed(seed, 1), 0.5, 1.5),
                      rand({3}, derive_seed(seed, 2))});
               }});
  c.push_back(unary("relu", [](auto& x) { return relu(x); }, {4, 5}, true));
  c.push_back(unary("silu", [](auto& x) { return silu(x); }, {4, 5}));
  c.push_back(unary("sigmoid", [](auto& x) { return sigmoid(x); }, {4, 5}));
  c.push_back(unary("softmax_last", [](auto& x) { return softmax(x); }, {3, 4}));
  c.push_back(unary("softmax_axis0", [](auto& x) { return softmax(x, 0); }, {3, 4}));
  c.push_back(unary("global_avg_pool", [](auto& x) { return global_avg_pool(x); }, {2, 3, 4, 5}));
  c.push_back(unary("dropout_train", [](auto& x) { return dropout(x, 0.3, Mode::kTrain, 99); }, {4, 6}));
  c.push_back({"dense_relu", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(dense(v[0], v[1], v[2], Activation::kRelu), seed);
                     },
                     {rand({3, 4}, seed), rand({4, 5}, derive_seed(seed, 1)),
                      away_from_zero(rand({5}, derive_seed(seed, 2)), 0.5)});
               }});
  c.push_back({"dense_softmax", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(dense(v[0], v[1], v[2], Activation::kSoftmax), seed);
                     },
                     {rand({3, 4}, seed), rand({4, 3}, derive_seed(seed, 1)), rand({3}, derive_seed(seed, 2))});
               }});
  c.push_back(binary("scale_channels", [](auto& x, auto& g) { return scale_channels(x, g); }, {2, 3, 3, 4},
                     {2, 4}));
  c.push_back({"squeeze_excite", [](std::uint64_t seed) {
                 return check(
                     [&](const std::vector<TensorD>& v) {
                       return contract(squeeze_excite(v[0], SqueezeExciteParams<double>{v[1], v[2], v[3], v[4]}),
                                       seed);
                     },
                     {rand({2, 3, 3, 4}, seed), rand({4, 2}, derive_seed(seed, 1)), rand({2}, derive_seed(seed, 2)),
                      rand({2, 4}, derive_seed(seed, 3)), rand({4}, derive_seed(seed, 4))});
               }});
  c.push_back({"cross_entropy", [](std::uint64_t seed) {
                 Rng rng(seed);
                 std::vector<int> labels(5);
                 for (auto& l : labels) l = static_cast<int>(rng.below(3));
                 return check([&](const std::vector<TensorD>& v) { return cross_entropy(softmax(v[0]), labels); },
                              {rand({5, 3}, seed, -2.0, 2.0)});
               }});
  c.push_back({"masked_smooth_l1", [](std::uint64_t seed) {
                 const std::vector<bool> mask{true, false, true, true};
                 const TensorD target = rand({4, 4}, derive_seed(seed, 1), -2.0, 2.0);
                 return check([&](const std::vector<TensorD>& v) { return masked_smooth_l1(v[0], target, mask); },
                              {rand({4, 4}, seed, -2.0, 2.0)});
               }});

  BlockConfig mb;
  mb.kind = BlockKind::kMBConv;
  mb.expansion_ratio = 4;
  mb.se_ratio = 0.25;
  mb.in_ch = mb.out_ch = 4;
  c.push_back(block("mbconv_skip_se", mb));
  BlockConfig mb1 = mb;
  mb1.expansion_ratio = 1;
  mb1.stride_h = mb1.stride_w = 2;
  mb1.kernel_h = mb1.kernel_w = 5;
  mb1.out_ch = 6;
  c.push_back(block("mbconv_ratio1_s2", mb1));
  BlockConfig fused = mb;
  fused.kind = BlockKind::kFusedMBConv;
  fused.se_ratio = 0.0;
  c.push_back(block("fused_skip", fused));
  BlockConfig fused1 = fused;
  fused1.expansion_ratio = 1;
  fused1.stride_h = fused1.stride_w = 2;
  fused1.out_ch = 6;
  c.push_back(block("fused_ratio1_s2", fused1));
  return c;
}

}  // namespace ceimven::testing
