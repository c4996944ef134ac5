// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "ceimven/error.hpp"
#include "ceimven/synthetic.hpp"
#include "ceimven/train.hpp"
#include "support.hpp"

using namespace ceimven;

namespace {

CeimvenConfig desk() {
  CeimvenConfig c;
  c.channel_scale = 0.1;
  c.input_size = 32;
  return c;
}

std::vector<ParamRef> one_param(float value, float grad) {
  Tensor t = Tensor::full({1}, value);
  t.set_requires_grad(true);
  t.mutable_grad()[0] = grad;
  return {ParamRef{"p", t, true}};
}

}  // namespace

TEST_CASE("reference training defaults") {
  const TrainConfig t;
  CHECK(t.batch_size == 42);
  CHECK(t.epochs == 500);
  CHECK(t.learning_rate == 0.01);
  TrainConfig d;
  CeimvenConfig m;
  apply_desk_profile(d, m);
  CHECK(d.batch_size == 16);
  CHECK(d.epochs == 50);
  CHECK(m.channel_scale == 0.1);
  CHECK(m.input_size == 32);
}

TEST_CASE("SGD updates") {
  SUBCASE("plain step") {
    auto p = one_param(1.0f, 0.5f);
    SgdOptimizer opt;
    opt.step(p, 0.01);
    CHECK(p[0].tensor.data()[0] == doctest::Approx(0.995));
    CHECK(p[0].tensor.grad()[0] == 0.0f);  // consumed
  }
  SUBCASE("momentum accumulates velocity") {
    auto p = one_param(0.0f, 1.0f);
    SgdOptimizer opt(0.9);
    opt.step(p, 0.1);
    CHECK(p[0].tensor.data()[0] == doctest::Approx(-0.1));
    p[0].tensor.mutable_grad()[0] = 1.0f;
    opt.step(p, 0.1);
    CHECK(p[0].tensor.data()[0] == doctest::Approx(-0.29));
  }
  SUBCASE("frozen parameters stay put") {
    auto p = one_param(1.0f, 1.0f);
    p[0].trainable = false;
    SgdOptimizer opt;
    opt.step(p, 0.1);
    CHECK(p[0].tensor.data()[0] == 1.0f);
  }
}

TEST_CASE("learning-rate schedule and validation") {
  TrainConfig t;
  t.lr_decay_factor = 0.5;
  t.lr_decay_every = 10;
  CHECK(t.learning_rate_at(1) == doctest::Approx(0.01));
  CHECK(t.learning_rate_at(11) == doctest::Approx(0.005));
  CHECK(TrainConfig::from_json(t.to_json()).to_json() == t.to_json());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ValueError);
  TrainConfig m;
  m.momentum = 1.0;
  CHECK_THROWS_AS(m.validate(), ValueError);
}

TEST_CASE("a short run lowers the loss and is reproducible") {
  const ExampleSet data = separable_set(48, 32, 3);
  TrainConfig t;
  t.epochs = 6;
  t.batch_size = 16;
  t.learning_rate = 0.05;
  t.seed = 4;
  Model a = build_ceimven(desk(), 4);
  std::size_t seen = 0;
  const History h = train(a, data, separable_set(12, 32, 5), t, [&](const EpochRecord&) { ++seen; });
  CHECK(seen == 6);
  REQUIRE(h.size() == 6);
  CHECK(h.back().train_loss < h.front().train_loss);
  CHECK(h.back().val_acc.has_value());
  CHECK(a.mode() == Mode::kEval);

  Model b = build_ceimven(desk(), 4);
  CHECK(train(b, data, separable_set(12, 32, 5), t) == h);
  CHECK(testing::same_state(a, b));

  const EvalReport r = evaluate(a, data);
  CHECK(r.total == 48);
  CHECK(EpochRecord::from_json(h[2].to_json()) == h[2]);
}

TEST_CASE("a frozen backbone does not move") {
  CeimvenConfig c = desk();
  c.freeze_backbone = true;
  Model m = build_ceimven(c, 1);
  Model ref = build_ceimven(c, 1);
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 8;
  train(m, separable_set(16, 32, 1), {}, t);
  const auto mp = m.parameters(), rp = ref.parameters();
  bool head_moved = false;
  for (std::size_t i = 0; i < mp.size(); ++i) {
    if (mp[i].name.rfind("backbone/", 0) == 0) {
      CHECK(testing::same_bits(mp[i].tensor, rp[i].tensor));
    } else {
      head_moved = head_moved || !testing::same_bits(mp[i].tensor, rp[i].tensor);
    }
  }
  CHECK(head_moved);
  const auto mb = m.buffers(), rb = ref.buffers();
  for (std::size_t i = 0; i < mb.size(); ++i) CHECK(testing::same_bits(mb[i].tensor, rb[i].tensor));
}

TEST_CASE("non-finite loss is reported with its position") {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.learning_rate = 1e30;
  Model m = build_ceimven(desk(), 1);
  CHECK_THROWS_WITH_AS(train(m, separable_set(16, 32, 1), {}, t), doctest::Contains("epoch"), NumericError);
}

TEST_CASE("examples carry boxes only for lesions") {
  std::vector<Sample> samples(2);
  std::vector<float> mask(224 * 224, 0.0f);
  for (std::size_t y = 50; y < 100; ++y) {
    for (std::size_t x = 20; x < 60; ++x) mask[y * 224 + x] = 1.0f;
  }
  samples[0] = {"benign/a", 0, Tensor::full({224, 224, 1}, 0.5), Tensor(Shape{224, 224, 1}, mask), "", {}};
  samples[1] = {"normal/b", 2, Tensor::full({224, 224, 1}, 0.5), Tensor(Shape{224, 224, 1}, mask), "", {}};
  const ExampleSet ex = to_examples(samples, 32);
  CHECK(ex[0].image.shape() == Shape{32, 32, 1});
  REQUIRE(ex[0].box.has_value());
  CHECK(*ex[0].box == BBox{20, 50, 60, 100});
  CHECK_FALSE(ex[1].box.has_value());
  CHECK(stack_images(ex, {1, 0}).shape() == Shape{2, 32, 32, 1});
}

TEST_CASE("detector training and evaluation") {
  const ExampleSet data = square_detection_set(24, 32, 2);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.lambda_box = 10;
  Model d = build_detector(desk(), 3);
  const History h = train_detector(d, data, data, t);
  CHECK(h.back().val_iou.has_value());
  const DetectionReport r = evaluate_detector(d, data, 10);
  CHECK(r.total == 24);
  CHECK(r.boxed == 24);
  CHECK(r.detections.size() == 24);
  CHECK((r.mean_iou >= 0.0 && r.mean_iou <= 1.0));

  ExampleSet broken = data;
  broken[0].box.reset();
  CHECK_THROWS_AS(train_detector(d, broken, {}, t), DataError);
}
