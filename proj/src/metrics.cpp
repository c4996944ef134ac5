// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "ceimven/error.hpp"
#include "ceimven/model.hpp"

namespace ceimven {

std::optional<double> binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("binary_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, 1-based.
  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        positive_rank_sum += rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double p = static_cast<double>(n_pos), q = static_cast<double>(n_neg);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

AucResult auc(const ScoreMatrix& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  if (scores.empty()) throw ValueError("auc: no samples");
  const std::size_t k = scores.front().size();
  AucResult out;
  double sum = 0.0;
  std::size_t evaluable = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s(scores.size());
    std::vector<bool> pos(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != k) throw ShapeError("auc: ragged score rows");
      s[i] = scores[i][c];
      pos[i] = labels[i] == static_cast<int>(c);
    }
    const auto a = binary_auc(s, pos);
    out.per_class.push_back(a);
    if (a) {
      sum += *a;
      ++evaluable;
    } else {
      out.skipped.push_back(static_cast<int>(c));
    }
  }
  if (evaluable == 0) throw ValueError("auc: no class has both positives and negatives");
  out.macro = sum / static_cast<double>(evaluable);
  return out;
}

Confusion confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes) {
  if (truth.size() != predicted.size()) throw ShapeError("confusion_matrix: length mismatch");
  const auto k = static_cast<std::size_t>(num_classes);
  Confusion m(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw ValueError("confusion_matrix: label out of range");
    }
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

std::vector<ClassStats> class_stats(const Confusion& confusion) {
  const std::size_t k = confusion.size();
  std::vector<ClassStats> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = confusion[c][c], row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion[c][j];
      col += confusion[j][c];
    }
    out[c].support = row;
    out[c].precision_undefined = col == 0;
    out[c].recall_undefined = row == 0;
    out[c].precision = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    out[c].recall = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
  }
  return out;
}

double accuracy_of(const Confusion& confusion) {
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    trace += confusion[i][i];
    for (auto v : confusion[i]) total += v;
  }
  return total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total);
}

double micro_recall(const Confusion& confusion) {
  std::size_t tp = 0, fn = 0;
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    tp += confusion[c][c];
    for (std::size_t j = 0; j < confusion.size(); ++j) {
      if (j != c) fn += confusion[c][j];
    }
  }
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& s = per_class[c];
    classes.push_back({{"class", c < kClassNames.size() ? kClassNames[c] : std::to_string(c)},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"support", s.support},
                       {"precision_undefined", s.precision_undefined},
                       {"recall_undefined", s.recall_undefined}});
  }
  return {{"accuracy", accuracy},
          {"macro_auc", macro_auc ? nlohmann::json(*macro_auc) : nlohmann::json(nullptr)},
          {"mean_loss", mean_loss},
          {"confusion", confusion},
          {"per_class", classes},
          {"total", total}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.accuracy = j.at("accuracy").get<double>();
  if (!j.at("macro_auc").is_null()) r.macro_auc = j.at("macro_auc").get<double>();
  r.mean_loss = j.at("mean_loss").get<double>();
  r.confusion = j.at("confusion").get<Confusion>();
  for (const auto& c : j.at("per_class")) {
    r.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(),
                           c.at("support").get<std::size_t>(), c.at("precision_undefined").get<bool>(),
                           c.at("recall_undefined").get<bool>()});
  }
  r.total = j.at("total").get<std::size_t>();
  return r;
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (per_class.size() != o.per_class.size()) return false;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto &a = per_class[c], &b = o.per_class[c];
    if (a.precision != b.precision || a.recall != b.recall || a.support != b.support ||
        a.precision_undefined != b.precision_undefined || a.recall_undefined != b.recall_undefined) {
      return false;
    }
  }
  return accuracy == o.accuracy && macro_auc == o.macro_auc && mean_loss == o.mean_loss &&
         confusion == o.confusion && total == o.total;
}

EvalReport make_report(const ScoreMatrix& probs, const std::vector<int>& labels, double mean_loss) {
  if (probs.empty()) throw ValueError("evaluation over an empty split");
  const int k = static_cast<int>(probs.front().size());
  std::vector<int> predicted;
  for (const auto& row : probs) {
    predicted.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  EvalReport r;
  r.confusion = confusion_matrix(labels, predicted, k);
  r.per_class = class_stats(r.confusion);
  r.accuracy = accuracy_of(r.confusion);
  r.total = labels.size();
  r.mean_loss = mean_loss;
  try {
    r.macro_auc = auc(probs, labels).macro;
  } catch (const ValueError&) {
    r.macro_auc.reset();
  }
  return r;
}

}  // namespace ceimven
