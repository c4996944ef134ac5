// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <vector>

#include "ceimven/layers.hpp"
#include "ceimven/scaling.hpp"

namespace ceimven {

/// EfficientNet feature extractor: stem conv -> scaled stages -> 1x1 head
/// conv, each conv followed by batch norm and silu. Produces [n, h/32, w/32,
/// head_channels].
///
/// A frozen backbone runs its batch norms on running statistics, so neither
/// parameters nor running state move during training.
class Backbone : public Layer {
 public:
  Backbone(std::string name, VariantSpec spec, double channel_scale, std::uint64_t seed);

  std::string_view kind() const override { return "backbone"; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  void collect_parameters(std::vector<ParamRef>& out) const override;
  void collect_buffers(std::vector<BufferRef>& out) const override;
  nlohmann::json describe() const override;

  const VariantSpec& spec() const { return spec_; }
  double channel_scale() const { return channel_scale_; }
  const StageTable& table() const { return table_; }
  const std::vector<BlockConfig>& blocks() const { return block_cfgs_; }
  /// Block names in execution order, e.g. "block2a".
  const std::vector<std::string>& block_names() const { return block_names_; }
  std::size_t output_channels() const { return table_.head_channels; }

 private:
  VariantSpec spec_;
  double channel_scale_;
  StageTable table_;
  ConvBnParams<float> stem_;
  std::vector<BlockConfig> block_cfgs_;
  std::vector<std::string> block_names_;
  std::vector<BlockParams<float>> block_params_;
  ConvBnParams<float> head_;
};

/// Freshly initialized, trainable backbone for a variant. Deterministic in
/// (spec, channel_scale, seed).
std::unique_ptr<Backbone> build_backbone(const VariantSpec& spec, double channel_scale = 1.0,
                                         std::uint64_t seed = 0);

}  // namespace ceimven
