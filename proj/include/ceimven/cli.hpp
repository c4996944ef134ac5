// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ceimven/data.hpp"
#include "ceimven/model.hpp"
#include "ceimven/train.hpp"

namespace ceimven {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

/// Every knob of a pipeline run. Serialised as one flat JSON object; unknown
/// keys are rejected so typos do not silently fall back to defaults.
///
/// Keys: dataset_root, output_dir, task ("classify" | "detect"), family,
/// variant, seed, num_classes, intermediate_dense_units, freeze_backbone,
/// channel_scale, input_size, workers, split_ratios, augment_target_total,
/// augment_per_original, augment_hflip, augment_vflip, augment_rotation_range,
/// augment_shift_range, augment_zoom_min, augment_zoom_max,
/// augment_brightness_min, augment_brightness_max, batch_size, epochs,
/// learning_rate, momentum, desk_scale, checkpoint_every, lr_decay_factor,
/// lr_decay_every, lambda_box.
struct RunConfig {
  std::string dataset_root;
  std::string output_dir;
  Task task = Task::kClassify;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  CeimvenConfig model;
  AugmentConfig augment;
  TrainConfig train;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// Config with the desk profile applied when desk_scale is set.
  RunConfig effective() const;
  /// Hex FNV-1a of the effective config without output_dir and workers.
  std::string hash() const;
};

/// Resolution order: --out flag, config output_dir, $CEIMVEN_OUTPUT_DIR, "runs".
std::filesystem::path resolve_output_root(const std::string& flag, const RunConfig& config);

/// Entry point of the command-line tool. Returns the process exit code; on
/// failure writes one JSON line {"error", "kind", "exit_code"} to stderr.
int cli_main(int argc, const char* const* argv);

}  // namespace ceimven
