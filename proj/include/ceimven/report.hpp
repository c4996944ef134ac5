// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/metrics.hpp"
#include "ceimven/train.hpp"

namespace ceimven {

/// Everything a run reports. `metadata` holds wall-clock details and is the
/// only part allowed to differ between reruns of one config.
struct RunReport {
  std::string variant;  // e.g. "EfficientNet-V1-b0"
  std::optional<EvalReport> evaluation;
  History history;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  /// Equality ignoring metadata.
  bool same_content(const RunReport& other) const;
};

/// Writes into `dir`:
///   report.json         the full RunReport
///   summary.csv         variant,training_accuracy,validation_accuracy,training_loss,validation_loss
///   accuracy_table.csv  model,training_accuracy,validation_accuracy
///   loss_table.csv      model,training_loss,validation_loss
///   history.csv         epoch,train_loss,val_loss,train_acc,val_acc
/// Final-epoch values feed the tables; missing validation values are left empty.
void emit_report(const RunReport& report, const std::filesystem::path& dir);

/// Accuracy and loss tables with one row per run, in the given order.
void emit_tables(const std::vector<RunReport>& reports, const std::filesystem::path& dir);

RunReport read_report(const std::filesystem::path& report_json);

/// JSON text with metadata removed, for byte comparisons between runs.
std::string canonical_report_text(const nlohmann::json& report);

}  // namespace ceimven
