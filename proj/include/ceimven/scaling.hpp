// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/nn_ops.hpp"

namespace ceimven {

enum class Family { kV1, kV2 };

std::string_view family_name(Family family);
/// Accepts "V1"/"V2" in either case.
Family family_from_name(std::string_view name);

/// Every variant is trained and evaluated at this input size.
inline constexpr int kInputResolution = 224;
inline constexpr double kV1HeadDropout = 0.20;
inline constexpr double kV2HeadDropout = 0.25;

struct VariantSpec {
  Family family = Family::kV1;
  int index = 0;
  double width_mult = 1.0;
  double depth_mult = 1.0;
  int resolution = kInputResolution;
  double head_dropout = kV1HeadDropout;

  /// e.g. "EfficientNet-V1-b0"
  std::string name() const;
  nlohmann::json to_json() const;
};

/// Frozen spec for V1 b0-b7 or V2 b0-b3; throws ValueError out of range.
VariantSpec variant_spec(Family family, int index);
int variant_count(Family family);
std::vector<VariantSpec> all_variants();

/// Nearest multiple of 8 to base * width_mult, bumped up by 8 when rounding
/// lost more than 10%, never below 8.
int round_filters(int base, double width_mult);
/// Same rule applied to an already-scaled, possibly fractional, target.
int round_channels(double target);
/// ceil(base * depth_mult)
int round_repeats(int base, double depth_mult);

/// One entry per stage; `repeats` is the stage depth and the declared stride
/// applies to its first block only.
struct StageTable {
  std::size_t stem_channels = 0;
  std::vector<BlockConfig> stages;
  std::size_t head_channels = 0;

  nlohmann::json to_json() const;
};

/// Unscaled reference table of a family.
StageTable base_stage_table(Family family);

/// Table scaled by the variant's multipliers. `channel_scale` shrinks every
/// width before rounding.
StageTable scaled_stage_table(const VariantSpec& spec, double channel_scale = 1.0);

/// Per-block configs with repeats unrolled (repeats == 1 on each).
std::vector<BlockConfig> expand_stages(const StageTable& table);

/// All variant specs with their scaled stage tables.
nlohmann::json variants_json();

}  // namespace ceimven
