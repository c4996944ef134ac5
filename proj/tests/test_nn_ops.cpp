// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "ceimven/error.hpp"
#include "ceimven/nn_ops.hpp"

using namespace ceimven;

TEST_CASE("same padding follows the TF rule") {
  CHECK(conv_axis(7, 3, 2, Padding::kSame).out == 4);
  CHECK(conv_axis(7, 3, 2, Padding::kSame).pad_before == 1);
  CHECK(conv_axis(6, 3, 2, Padding::kSame).out == 3);
  CHECK(conv_axis(6, 3, 2, Padding::kSame).pad_before == 0);  // odd total, extra at the end
  CHECK(conv_axis(224, 3, 2, Padding::kSame).out == 112);
  CHECK(conv_axis(7, 3, 2, Padding::kValid).out == 3);
  CHECK(conv_axis(5, 1, 1, Padding::kValid).out == 5);
}

TEST_CASE("conv2d against hand-computed sums") {
  const Tensor x = Tensor::ones({1, 3, 3, 1});
  const Tensor w = Tensor::ones({3, 3, 1, 1});
  const Tensor y = conv2d(x, w, Tensor{}, 1, 1, Padding::kSame);
  CHECK(y.shape() == Shape{1, 3, 3, 1});
  CHECK(y.data()[0] == 4.0f);  // corner
  CHECK(y.data()[1] == 6.0f);  // edge
  CHECK(y.data()[4] == 9.0f);  // centre

  const Tensor yb = conv2d(x, w, Tensor::full({1}, 0.5), 1, 1, Padding::kValid);
  CHECK(yb.shape() == Shape{1, 1, 1, 1});
  CHECK(yb.item() == 9.5f);

  // 1x1 conv is a per-pixel matmul over channels.
  const Tensor x2(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor w2(Shape{1, 1, 2, 1}, {10, 1});
  const Tensor y2 = conv2d(x2, w2, Tensor{}, 1, 1, Padding::kSame);
  CHECK(y2.data()[0] == 12.0f);
  CHECK(y2.data()[1] == 34.0f);
  CHECK_THROWS_AS(conv2d(x2, Tensor::ones({1, 1, 3, 1}), Tensor{}, 1, 1, Padding::kSame), ShapeError);
}

TEST_CASE("depthwise keeps channels apart") {
  const Tensor x(Shape{1, 1, 1, 2}, {2, 3});
  const Tensor w(Shape{1, 1, 2, 1}, {10, 100});
  const Tensor y = depthwise_conv2d(x, w, 1, 1, Padding::kSame);
  CHECK(y.data()[0] == 20.0f);
  CHECK(y.data()[1] == 300.0f);
}

TEST_CASE("batch norm modes and running statistics") {
  const Tensor x(Shape{4, 1, 1, 1}, {1, 2, 3, 4});
  auto p = BatchNormParams<float>::identity(1);
  const Tensor ev = batch_norm(x, p, Mode::kEval);
  CHECK(ev.data()[3] == doctest::Approx(4.0 / std::sqrt(1.0 + 1e-3)));

  const Tensor tr = batch_norm(x, p, Mode::kTrain);
  double m = 0;
  for (float v : tr.data()) m += v;
  CHECK(m == doctest::Approx(0.0).epsilon(1e-6));
  // momentum 0.99: running = 0.99 * running + 0.01 * batch; batch var is biased-free 1.25 or 5/3
  CHECK(p.running_mean.data()[0] == doctest::Approx(0.025));
  CHECK(p.running_var.data()[0] > 0.99);
}

TEST_CASE("activations") {
  const Tensor x(Shape{1, 3}, {-1.0f, 0.0f, 2.0f});
  CHECK(relu(x).data()[0] == 0.0f);
  CHECK(relu(x).data()[2] == 2.0f);
  CHECK(sigmoid(x).data()[1] == 0.5f);
  CHECK(silu(x).data()[2] == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));
  const Tensor big(Shape{2, 2}, {1000.0f, 0.0f, -5.0f, -5.0f});
  const Tensor s = softmax(big);
  CHECK(s.data()[0] == 1.0f);
  CHECK(s.data()[2] == 0.5f);
  CHECK(activation_from_name(activation_name(Activation::kSilu)) == Activation::kSilu);
}

TEST_CASE("dropout") {
  const Tensor x = Tensor::ones({100, 100});
  CHECK(dropout(x, 0.3, Mode::kEval, 1).id() == x.id());
  const Tensor a = dropout(x, 0.3, Mode::kTrain, 1);
  const Tensor b = dropout(x, 0.3, Mode::kTrain, 1);
  const Tensor c = dropout(x, 0.3, Mode::kTrain, 2);
  std::size_t zeros = 0;
  for (float v : a.data()) {
    if (v == 0.0f) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.7));
    }
  }
  CHECK(zeros == doctest::Approx(3000).epsilon(0.1));
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST_CASE("squeeze-excite width and block shapes") {
  CHECK(se_reduced_width(16, 0.25) == 4);
  CHECK(se_reduced_width(2, 0.25) == 1);

  BlockConfig cfg;
  cfg.expansion_ratio = 6;
  cfg.se_ratio = 0.25;
  cfg.in_ch = 16;
  cfg.out_ch = 24;
  cfg.stride_h = cfg.stride_w = 2;
  CHECK(cfg.expanded_channels() == 96);
  CHECK_FALSE(cfg.has_skip());
  auto params = make_block_params<float>(cfg, 3);
  CHECK(params.expand.has_value());
  CHECK(params.se->reduce_w.shape() == Shape{96, 4});
  const Tensor y = block_forward(Tensor::ones({2, 8, 8, 16}), cfg, params, Mode::kEval);
  CHECK(y.shape() == Shape{2, 4, 4, 24});

  BlockConfig fused;
  fused.kind = BlockKind::kFusedMBConv;
  fused.in_ch = fused.out_ch = 8;
  auto fp = make_block_params<float>(fused, 4);
  CHECK_FALSE(fp.expand.has_value());
  CHECK(fp.project.kernel.shape() == Shape{3, 3, 8, 8});
  CHECK(fused.has_skip());
  CHECK(block_forward(Tensor::ones({1, 4, 4, 8}), fused, fp, Mode::kEval).shape() == Shape{1, 4, 4, 8});
}
