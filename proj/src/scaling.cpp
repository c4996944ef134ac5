// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/scaling.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "ceimven/error.hpp"

namespace ceimven {

std::string_view family_name(Family family) {
  return family == Family::kV1 ? "V1" : "V2";
}

Family family_from_name(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "V1") return Family::kV1;
  if (up == "V2") return Family::kV2;
  throw ValueError("unknown family '" + std::string(name) + "' (expected V1 or V2)");
}

namespace {

struct Coefficients {
  double width;
  double depth;
};

constexpr std::array<Coefficients, 8> kV1Coefficients{{
    {1.0, 1.0}, {1.0, 1.1}, {1.1, 1.2}, {1.2, 1.4}, {1.4, 1.8}, {1.6, 2.2}, {1.8, 2.6}, {2.0, 3.1},
}};

constexpr std::array<Coefficients, 4> kV2Coefficients{{
    {1.0, 1.0}, {1.0, 1.1}, {1.1, 1.2}, {1.2, 1.4},
}};

struct BaseStage {
  BlockKind kind;
  double expansion;
  std::size_t kernel;
  std::size_t stride;
  std::size_t in_ch;
  std::size_t out_ch;
  std::size_t repeats;
  double se_ratio;
};

constexpr std::array<BaseStage, 7> kV1Stages{{
    {BlockKind::kMBConv, 1, 3, 1, 32, 16, 1, 0.25},
    {BlockKind::kMBConv, 6, 3, 2, 16, 24, 2, 0.25},
    {BlockKind::kMBConv, 6, 5, 2, 24, 40, 2, 0.25},
    {BlockKind::kMBConv, 6, 3, 2, 40, 80, 3, 0.25},
    {BlockKind::kMBConv, 6, 5, 1, 80, 112, 3, 0.25},
    {BlockKind::kMBConv, 6, 5, 2, 112, 192, 4, 0.25},
    {BlockKind::kMBConv, 6, 3, 1, 192, 320, 1, 0.25},
}};

// Fused stages carry no squeeze-excite.
constexpr std::array<BaseStage, 6> kV2Stages{{
    {BlockKind::kFusedMBConv, 1, 3, 1, 32, 16, 1, 0.0},
    {BlockKind::kFusedMBConv, 4, 3, 2, 16, 32, 2, 0.0},
    {BlockKind::kFusedMBConv, 4, 3, 2, 32, 48, 2, 0.0},
    {BlockKind::kMBConv, 4, 3, 2, 48, 96, 3, 0.25},
    {BlockKind::kMBConv, 6, 3, 1, 96, 112, 5, 0.25},
    {BlockKind::kMBConv, 6, 3, 2, 112, 192, 8, 0.25},
}};

constexpr std::size_t kStemChannels = 32;
constexpr std::size_t kHeadChannels = 1280;

}  // namespace

std::string VariantSpec::name() const {
  return "EfficientNet-" + std::string(family_name(family)) + "-b" + std::to_string(index);
}

nlohmann::json VariantSpec::to_json() const {
  return {{"name", name()},
          {"family", family_name(family)},
          {"index", index},
          {"width_mult", width_mult},
          {"depth_mult", depth_mult},
          {"resolution", resolution},
          {"head_dropout", head_dropout}};
}

int variant_count(Family family) {
  return family == Family::kV1 ? static_cast<int>(kV1Coefficients.size())
                               : static_cast<int>(kV2Coefficients.size());
}

VariantSpec variant_spec(Family family, int index) {
  if (index < 0 || index >= variant_count(family)) {
    throw ValueError("variant index " + std::to_string(index) + " out of range for " +
                     std::string(family_name(family)) + " (0.." +
                     std::to_string(variant_count(family) - 1) + ")");
  }
  const Coefficients c = family == Family::kV1 ? kV1Coefficients[index] : kV2Coefficients[index];
  VariantSpec spec;
  spec.family = family;
  spec.index = index;
  spec.width_mult = c.width;
  spec.depth_mult = c.depth;
  spec.resolution = kInputResolution;
  spec.head_dropout = family == Family::kV1 ? kV1HeadDropout : kV2HeadDropout;
  return spec;
}

std::vector<VariantSpec> all_variants() {
  std::vector<VariantSpec> out;
  for (Family f : {Family::kV1, Family::kV2}) {
    for (int i = 0; i < variant_count(f); ++i) out.push_back(variant_spec(f, i));
  }
  return out;
}

int round_channels(double target) {
  constexpr int kDivisor = 8;
  int rounded = std::max(kDivisor, static_cast<int>(target + kDivisor / 2.0) / kDivisor * kDivisor);
  if (rounded < 0.9 * target) rounded += kDivisor;
  return rounded;
}

int round_filters(int base, double width_mult) {
  return round_channels(static_cast<double>(base) * width_mult);
}

int round_repeats(int base, double depth_mult) {
  return static_cast<int>(std::ceil(static_cast<double>(base) * depth_mult));
}

nlohmann::json StageTable::to_json() const {
  nlohmann::json stages_json = nlohmann::json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"kind", block_kind_name(s.kind)},
                           {"expansion_ratio", s.expansion_ratio},
                           {"kernel", {s.kernel_h, s.kernel_w}},
                           {"stride", {s.stride_h, s.stride_w}},
                           {"se_ratio", s.se_ratio},
                           {"in_ch", s.in_ch},
                           {"out_ch", s.out_ch},
                           {"repeats", s.repeats}});
  }
  return {{"stem_channels", stem_channels}, {"stages", stages_json}, {"head_channels", head_channels}};
}

namespace {

template <std::size_t N>
StageTable make_table(const std::array<BaseStage, N>& base, double width, double depth,
                      double channel_scale, bool scale) {
  auto ch = [&](std::size_t c) {
    return scale ? static_cast<std::size_t>(round_channels(static_cast<double>(c) * channel_scale * width))
                 : c;
  };
  StageTable t;
  t.stem_channels = ch(kStemChannels);
  t.head_channels = ch(kHeadChannels);
  for (const auto& s : base) {
    BlockConfig cfg;
    cfg.kind = s.kind;
    cfg.expansion_ratio = s.expansion;
    cfg.kernel_h = cfg.kernel_w = s.kernel;
    cfg.stride_h = cfg.stride_w = s.stride;
    cfg.se_ratio = s.se_ratio;
    cfg.in_ch = ch(s.in_ch);
    cfg.out_ch = ch(s.out_ch);
    cfg.repeats = scale ? static_cast<std::size_t>(round_repeats(static_cast<int>(s.repeats), depth))
                        : s.repeats;
    t.stages.push_back(cfg);
  }
  return t;
}

}  // namespace

StageTable base_stage_table(Family family) {
  return family == Family::kV1 ? make_table(kV1Stages, 1.0, 1.0, 1.0, false)
                               : make_table(kV2Stages, 1.0, 1.0, 1.0, false);
}

StageTable scaled_stage_table(const VariantSpec& spec, double channel_scale) {
  if (!(channel_scale > 0.0) || channel_scale > 1.0) {
    throw ValueError("channel_scale must be in (0, 1], got " + std::to_string(channel_scale));
  }
  return spec.family == Family::kV1
             ? make_table(kV1Stages, spec.width_mult, spec.depth_mult, channel_scale, true)
             : make_table(kV2Stages, spec.width_mult, spec.depth_mult, channel_scale, true);
}

std::vector<BlockConfig> expand_stages(const StageTable& table) {
  std::vector<BlockConfig> blocks;
  for (const auto& stage : table.stages) {
    for (std::size_t r = 0; r < stage.repeats; ++r) {
      BlockConfig b = stage;
      b.repeats = 1;
      if (r > 0) {
        b.in_ch = stage.out_ch;
        b.stride_h = b.stride_w = 1;
      }
      blocks.push_back(b);
    }
  }
  return blocks;
}

nlohmann::json variants_json() {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : all_variants()) {
    auto j = v.to_json();
    j["stage_table"] = scaled_stage_table(v).to_json();
    out.push_back(j);
  }
  return out;
}

}  // namespace ceimven
