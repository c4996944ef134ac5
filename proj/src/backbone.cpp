// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/backbone.hpp"

#include "ceimven/rng.hpp"

namespace ceimven {

namespace {

ConvBnParams<float> make_conv_bn(std::size_t k, std::size_t in, std::size_t out, std::uint64_t seed) {
  return {Tensor::create({k, k, in, out}, init::Kaiming{k * k * in, seed}),
          BatchNormParams<float>::identity(out)};
}

void push_conv_bn(std::vector<ParamRef>& out, const std::string& prefix, const ConvBnParams<float>& p,
                  bool trainable) {
  out.push_back({prefix + "/kernel", p.kernel, trainable});
  out.push_back({prefix + "/bn/gamma", p.bn.gamma, trainable});
  out.push_back({prefix + "/bn/beta", p.bn.beta, trainable});
}

void push_bn_state(std::vector<BufferRef>& out, const std::string& prefix, const ConvBnParams<float>& p) {
  out.push_back({prefix + "/bn/running_mean", p.bn.running_mean});
  out.push_back({prefix + "/bn/running_var", p.bn.running_var});
}

// "block" + 1-based stage + repeat letter, so "block2b" is stage 2's second block.
std::string block_name(std::size_t stage, std::size_t repeat) {
  std::string s = "block" + std::to_string(stage + 1);
  if (repeat < 26) return s + static_cast<char>('a' + repeat);
  return s + "_" + std::to_string(repeat);
}

}  // namespace

Backbone::Backbone(std::string name, VariantSpec spec, double channel_scale, std::uint64_t seed)
    : Layer(std::move(name)),
      spec_(spec),
      channel_scale_(channel_scale),
      table_(scaled_stage_table(spec, channel_scale)) {
  stem_ = make_conv_bn(3, 3, table_.stem_channels, derive_seed(seed, "stem"));
  for (std::size_t s = 0; s < table_.stages.size(); ++s) {
    const auto& stage = table_.stages[s];
    for (std::size_t r = 0; r < stage.repeats; ++r) {
      BlockConfig b = stage;
      b.repeats = 1;
      if (r > 0) {
        b.in_ch = stage.out_ch;
        b.stride_h = b.stride_w = 1;
      }
      block_names_.push_back(block_name(s, r));
      block_params_.push_back(make_block_params<float>(b, derive_seed(seed, block_names_.back())));
      block_cfgs_.push_back(b);
    }
  }
  const std::size_t last = block_cfgs_.empty() ? table_.stem_channels : block_cfgs_.back().out_ch;
  head_ = make_conv_bn(1, last, table_.head_channels, derive_seed(seed, "top"));
  set_trainable(true);
}

Tensor Backbone::forward(const Tensor& x, const ForwardContext& ctx) {
  // Frozen weights imply frozen statistics.
  const Mode mode = trainable_ ? ctx.mode : Mode::kEval;
  Tensor h = conv2d(x, stem_.kernel, Tensor{}, 2, 2, Padding::kSame);
  h = silu(batch_norm(h, stem_.bn, mode));
  for (std::size_t i = 0; i < block_cfgs_.size(); ++i) {
    h = block_forward(h, block_cfgs_[i], block_params_[i], mode);
  }
  h = conv2d(h, head_.kernel, Tensor{}, 1, 1, Padding::kSame);
  return silu(batch_norm(h, head_.bn, mode));
}

void Backbone::collect_parameters(std::vector<ParamRef>& out) const {
  push_conv_bn(out, name_ + "/stem/conv", stem_, trainable_);
  for (std::size_t i = 0; i < block_params_.size(); ++i) {
    const auto& p = block_params_[i];
    const std::string prefix = name_ + "/" + block_names_[i];
    if (p.expand) push_conv_bn(out, prefix + "/expand", *p.expand, trainable_);
    if (p.depthwise) push_conv_bn(out, prefix + "/depthwise", *p.depthwise, trainable_);
    if (p.se) {
      out.push_back({prefix + "/se/reduce/kernel", p.se->reduce_w, trainable_});
      out.push_back({prefix + "/se/reduce/bias", p.se->reduce_b, trainable_});
      out.push_back({prefix + "/se/expand/kernel", p.se->expand_w, trainable_});
      out.push_back({prefix + "/se/expand/bias", p.se->expand_b, trainable_});
    }
    push_conv_bn(out, prefix + "/project", p.project, trainable_);
  }
  push_conv_bn(out, name_ + "/top/conv", head_, trainable_);
}

void Backbone::collect_buffers(std::vector<BufferRef>& out) const {
  push_bn_state(out, name_ + "/stem/conv", stem_);
  for (std::size_t i = 0; i < block_params_.size(); ++i) {
    const auto& p = block_params_[i];
    const std::string prefix = name_ + "/" + block_names_[i];
    if (p.expand) push_bn_state(out, prefix + "/expand", *p.expand);
    if (p.depthwise) push_bn_state(out, prefix + "/depthwise", *p.depthwise);
    push_bn_state(out, prefix + "/project", p.project);
  }
  push_bn_state(out, name_ + "/top/conv", head_);
}

nlohmann::json Backbone::describe() const {
  auto j = Layer::describe();
  j["variant"] = spec_.to_json();
  j["channel_scale"] = channel_scale_;
  j["blocks"] = block_cfgs_.size();
  j["output_channels"] = table_.head_channels;
  j["trainable"] = trainable_;
  return j;
}

std::unique_ptr<Backbone> build_backbone(const VariantSpec& spec, double channel_scale,
                                         std::uint64_t seed) {
  return std::make_unique<Backbone>("backbone", spec, channel_scale, seed);
}

}  // namespace ceimven
