// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

namespace ceimven {

using ScoreMatrix = std::vector<std::vector<double>>;  // [n][k]
using Confusion = std::vector<std::vector<std::size_t>>;  // rows = true, cols = predicted

/// Rank-based (Mann-Whitney) AUC of one binary problem; ties count one half.
/// nullopt when either side is empty.
std::optional<double> binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

struct AucResult {
  double macro = 0.0;
  std::vector<std::optional<double>> per_class;
  std::vector<int> skipped;  // classes lacking a positive or a negative
};

/// Macro one-vs-rest AUC over the evaluable classes. Throws ValueError when
/// no class is evaluable.
AucResult auc(const ScoreMatrix& scores, const std::vector<int>& labels);

Confusion confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;
  bool precision_undefined = false;  // nothing predicted as this class
  bool recall_undefined = false;     // no sample of this class
};

std::vector<ClassStats> class_stats(const Confusion& confusion);
double accuracy_of(const Confusion& confusion);
/// Pooled TP / (TP + FN) over all classes.
double micro_recall(const Confusion& confusion);

struct EvalReport {
  double accuracy = 0.0;
  std::optional<double> macro_auc;  // absent when no class is evaluable
  double mean_loss = 0.0;
  Confusion confusion;
  std::vector<ClassStats> per_class;
  std::size_t total = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const;
};

/// Assembles a report from per-sample probabilities, labels and mean loss.
EvalReport make_report(const ScoreMatrix& probs, const std::vector<int>& labels, double mean_loss);

}  // namespace ceimven
