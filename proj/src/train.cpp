// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ceimven/artifact.hpp"
#include "ceimven/error.hpp"
#include "ceimven/image.hpp"
#include "ceimven/losses.hpp"
#include "ceimven/rng.hpp"
#include "ceimven/tape.hpp"

namespace ceimven {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (epochs < 1) throw ValueError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ValueError("momentum must be in [0, 1)");
  if (!(lr_decay_factor > 0.0)) throw ValueError("lr_decay_factor must be > 0");
  if (lambda_box < 0.0) throw ValueError("lambda_box must be >= 0");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return learning_rate;
  return learning_rate * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},         {"epochs", epochs},
          {"learning_rate", learning_rate},   {"momentum", momentum},
          {"seed", seed},                     {"desk_scale", desk_scale},
          {"checkpoint_every", checkpoint_every}, {"checkpoint_dir", checkpoint_dir},
          {"lr_decay_factor", lr_decay_factor}, {"lr_decay_every", lr_decay_every},
          {"lambda_box", lambda_box}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.desk_scale = j.value("desk_scale", c.desk_scale);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
  c.lambda_box = j.value("lambda_box", c.lambda_box);
  return c;
}

void apply_desk_profile(TrainConfig& train, CeimvenConfig& model) {
  train.desk_scale = true;
  train.epochs = std::min<std::size_t>(train.epochs, 50);
  train.batch_size = 16;
  model.channel_scale = 0.1;
  model.input_size = 32;
}

ExampleSet to_examples(const std::vector<Sample>& samples, std::size_t input_size) {
  ExampleSet out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Example e;
    e.label = s.label;
    e.image = s.image.dim(0) == input_size && s.image.dim(1) == input_size
                  ? s.image
                  : resize_bilinear(s.image, input_size, input_size);
    if (s.mask.defined() && s.label != kNormalClass) {
      if (auto box = enclosing_box(bbox_from_mask(s.mask))) {
        e.box = scale_box(*box, kBoxFrame / static_cast<double>(s.mask.dim(1)));
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

Tensor stack_images(const ExampleSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ValueError("stack_images: empty batch");
  const Shape first = set.at(indices.front()).image.shape();
  std::size_t channels = 1;
  for (auto i : indices) {
    const Shape& s = set.at(i).image.shape();
    if (s.size() != 3 || s[0] != first[0] || s[1] != first[1]) {
      throw ShapeError("stack_images: image " + shape_str(s) + " does not match " + shape_str(first));
    }
    channels = std::max(channels, s[2]);
  }
  const std::size_t plane = first[0] * first[1];
  std::vector<float> out(indices.size() * plane * channels);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = set[indices[b]].image;
    const auto d = img.data();
    float* dst = out.data() + b * plane * channels;
    if (img.dim(2) == channels) {
      std::copy(d.begin(), d.end(), dst);
    } else {
      for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < channels; ++c) dst[p * channels + c] = d[p];
      }
    }
  }
  return Tensor(Shape{indices.size(), first[0], first[1], channels}, std::move(out));
}

void sgd_step(const std::vector<ParamRef>& params, const std::map<std::string, std::vector<float>>& grads,
              double lr, double momentum, VelocityMap& velocity) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    const auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    Tensor t = p.tensor;
    auto data = t.mutable_data();
    const auto& g = it->second;
    if (g.size() != data.size()) {
      throw ShapeError(fmt::format("sgd_step: gradient of {} has {} values, parameter has {}", p.name, g.size(),
                                   data.size()));
    }
    if (momentum == 0.0) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(data[i] - lr * static_cast<double>(g[i]));
      }
      continue;
    }
    auto& v = velocity[p.name];
    if (v.size() != data.size()) v.assign(data.size(), 0.0f);
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = static_cast<float>(momentum * v[i] + g[i]);
      data[i] = static_cast<float>(data[i] - lr * static_cast<double>(v[i]));
    }
  }
}

void SgdOptimizer::step(const std::vector<ParamRef>& params, double lr) {
  std::map<std::string, std::vector<float>> grads;
  for (const auto& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    grads.emplace(p.name, std::vector<float>(g.begin(), g.end()));
  }
  sgd_step(params, grads, lr, momentum_, velocity_);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_acc", train_acc},
          {"val_loss", opt_json(val_loss)},
          {"val_acc", opt_json(val_acc)},
          {"val_auc", opt_json(val_auc)},
          {"val_iou", opt_json(val_iou)}};
}

EpochRecord EpochRecord::from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<double>();
  r.train_acc = j.at("train_acc").get<double>();
  r.val_loss = opt_from(j, "val_loss");
  r.val_acc = opt_from(j, "val_acc");
  r.val_auc = opt_from(j, "val_auc");
  r.val_iou = opt_from(j, "val_iou");
  return r;
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, "epoch"), epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  }
  return out;
}

std::size_t count_correct(const Tensor& probs, const std::vector<int>& labels) {
  const auto pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return hits;
}

void check_finite(const Tensor& loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss.item())) {
    throw NumericError(fmt::format("non-finite loss at epoch {} batch {}", epoch, batch));
  }
}

// Backward plus optimizer update; a loss that never touched a trainable
// tensor has nothing to propagate.
void apply_step(Tape<float>& tape, const Tensor& loss, Model& model, SgdOptimizer& opt, double lr) {
  if (!tape.contains(loss)) return;
  tape.backward(loss);
  opt.step(model.parameters(), lr);
}

void maybe_checkpoint(const Model& model, const TrainConfig& config, std::size_t epoch) {
  if (config.checkpoint_every == 0 || config.checkpoint_dir.empty() || epoch % config.checkpoint_every != 0) return;
  save_model(model, std::filesystem::path(config.checkpoint_dir) / fmt::format("epoch_{:04d}.ceimv", epoch),
             {{"epoch", epoch}});
}

// Loop shared by both tasks; `step_loss` runs the forward pass of one batch
// and returns (loss, correct predictions).
template <typename StepFn, typename ValFn>
History run_training(Model& model, std::size_t n, const TrainConfig& config, StepFn step_loss, ValFn validate,
                     const EpochCallback& on_epoch) {
  config.validate();
  if (n == 0) throw DataError("training split is empty");
  SgdOptimizer opt(config.momentum);
  for (const auto& p : model.parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  History history;
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch - 1);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batches = epoch_batches(n, config.batch_size, config.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      model.set_mode(Mode::kTrain);
      Tape<float> tape;
      TapeScope<float> scope(tape);
      const ForwardContext ctx{Mode::kTrain, derive_seed(dropout_seed, epoch * 1000003 + b)};
      const auto [loss, hits] = step_loss(batches[b], ctx);
      check_finite(loss, epoch, b + 1);
      apply_step(tape, loss, model, opt, lr);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batches[b].size());
      correct += hits;
    }
    model.set_mode(Mode::kEval);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    validate(rec);
    spdlog::debug("epoch {}: loss {:.5f} acc {:.4f}", epoch, rec.train_loss, rec.train_acc);
    history.push_back(rec);
    maybe_checkpoint(model, config, epoch);
    if (on_epoch) on_epoch(rec);
  }
  model.set_mode(Mode::kEval);
  return history;
}

std::vector<int> labels_of(const ExampleSet& set, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(set[i].label);
  return out;
}

std::vector<DetectionTarget> targets_of(const ExampleSet& set, const std::vector<std::size_t>& idx) {
  std::vector<DetectionTarget> out;
  for (auto i : idx) {
    if (set[i].label != kNormalClass && !set[i].box) {
      throw DataError(fmt::format("example {} is a lesion sample without a mask-derived box", i));
    }
    out.push_back({set[i].label, set[i].box});
  }
  return out;
}

std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    std::vector<std::size_t> c;
    for (std::size_t j = i; j < std::min(n, i + batch); ++j) c.push_back(j);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

History train(Model& model, const ExampleSet& train_set, const ExampleSet& val_set, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  if (model.task() != Task::kClassify) throw ValueError("train: model is a detector; use train_detector");
  auto step = [&](const std::vector<std::size_t>& idx, const ForwardContext& ctx) {
    const auto labels = labels_of(train_set, idx);
    const Tensor probs = model.forward(stack_images(train_set, idx), ctx);
    return std::pair{cross_entropy(probs, labels), count_correct(probs, labels)};
  };
  auto validate = [&](EpochRecord& rec) {
    if (val_set.empty()) return;
    const EvalReport r = evaluate(model, val_set);
    rec.val_loss = r.mean_loss;
    rec.val_acc = r.accuracy;
    rec.val_auc = r.macro_auc;
  };
  return run_training(model, train_set.size(), config, step, validate, on_epoch);
}

History train_detector(Model& detector, const ExampleSet& train_set, const ExampleSet& val_set,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  if (detector.task() != Task::kDetect) throw ValueError("train_detector: model is not a detector");
  auto step = [&](const std::vector<std::size_t>& idx, const ForwardContext& ctx) {
    const DetectorOutput out = detector.forward_detect(stack_images(train_set, idx), ctx);
    const auto targets = targets_of(train_set, idx);
    return std::pair{detection_loss(out, targets, config.lambda_box), count_correct(out.probs, labels_of(train_set, idx))};
  };
  auto validate = [&](EpochRecord& rec) {
    if (val_set.empty()) return;
    const DetectionReport r = evaluate_detector(detector, val_set, config.lambda_box);
    rec.val_loss = r.mean_loss;
    rec.val_acc = r.accuracy;
    if (r.boxed > 0) rec.val_iou = r.mean_iou;
  };
  return run_training(detector, train_set.size(), config, step, validate, on_epoch);
}

EvalReport evaluate(Model& model, const ExampleSet& set, std::size_t batch_size) {
  if (set.empty()) throw DataError("evaluation split is empty");
  NoGradScope<float> no_grad;
  ScoreMatrix scores;
  std::vector<int> labels;
  double loss_sum = 0.0;
  for (const auto& idx : chunks(set.size(), batch_size)) {
    const auto batch_labels = labels_of(set, idx);
    const Prediction p = predict(model, stack_images(set, idx));
    loss_sum += static_cast<double>(cross_entropy(p.probs, batch_labels).item()) * static_cast<double>(idx.size());
    const std::size_t k = p.probs.dim(1);
    const auto d = p.probs.data();
    for (std::size_t i = 0; i < idx.size(); ++i) scores.emplace_back(d.begin() + i * k, d.begin() + (i + 1) * k);
    labels.insert(labels.end(), batch_labels.begin(), batch_labels.end());
  }
  return make_report(scores, labels, loss_sum / static_cast<double>(set.size()));
}

nlohmann::json DetectionReport::to_json() const {
  return {{"accuracy", accuracy}, {"mean_iou", mean_iou}, {"boxed", boxed}, {"mean_loss", mean_loss}, {"total", total}};
}

DetectionReport evaluate_detector(Model& detector, const ExampleSet& set, double lambda_box, std::size_t batch_size) {
  if (set.empty()) throw DataError("evaluation split is empty");
  NoGradScope<float> no_grad;
  DetectionReport r;
  double loss_sum = 0.0, iou_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& idx : chunks(set.size(), batch_size)) {
    const Tensor images = stack_images(set, idx);
    const DetectorOutput out = detector.forward_detect(images, ForwardContext{Mode::kEval, 0});
    loss_sum += static_cast<double>(detection_loss(out, targets_of(set, idx), lambda_box).item()) *
                static_cast<double>(idx.size());
    const auto dets = detect_batch(detector, images);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Example& e = set[idx[i]];
      correct += dets[i].label == e.label ? 1 : 0;
      if (e.box) {
        iou_sum += iou(dets[i].bbox, *e.box);
        ++r.boxed;
      }
      r.detections.push_back(dets[i]);
    }
  }
  r.total = set.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  r.mean_iou = r.boxed == 0 ? 0.0 : iou_sum / static_cast<double>(r.boxed);
  r.mean_loss = loss_sum / static_cast<double>(r.total);
  return r;
}

}  // namespace ceimven
