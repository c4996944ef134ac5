// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "ceimven/error.hpp"

namespace ceimven {

namespace fs = std::filesystem;

nlohmann::json RunReport::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history) hist.push_back(r.to_json());
  return {{"variant", variant},
          {"evaluation", evaluation ? evaluation->to_json() : nlohmann::json(nullptr)},
          {"history", hist},
          {"config", config},
          {"metadata", metadata}};
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    r.variant = j.at("variant").get<std::string>();
    if (!j.at("evaluation").is_null()) r.evaluation = EvalReport::from_json(j.at("evaluation"));
    for (const auto& h : j.at("history")) r.history.push_back(EpochRecord::from_json(h));
    r.config = j.value("config", nlohmann::json::object());
    r.metadata = j.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

bool RunReport::same_content(const RunReport& o) const {
  return variant == o.variant && evaluation == o.evaluation && history == o.history && config == o.config;
}

namespace {

// Shortest text that reads back to the same double.
std::string num(double v) { return fmt::format("{}", v); }
std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

struct FinalValues {
  std::optional<double> train_acc, val_acc, train_loss, val_loss;
};

FinalValues final_values(const RunReport& r) {
  FinalValues v;
  if (!r.history.empty()) {
    const auto& last = r.history.back();
    v.train_acc = last.train_acc;
    v.train_loss = last.train_loss;
    v.val_acc = last.val_acc;
    v.val_loss = last.val_loss;
  }
  return v;
}

}  // namespace

void emit_tables(const std::vector<RunReport>& reports, const fs::path& dir) {
  fs::create_directories(dir);
  auto acc = open_out(dir / "accuracy_table.csv");
  auto loss = open_out(dir / "loss_table.csv");
  acc << "model,training_accuracy,validation_accuracy\n";
  loss << "model,training_loss,validation_loss\n";
  for (const auto& r : reports) {
    const auto v = final_values(r);
    acc << r.variant << ',' << num(v.train_acc) << ',' << num(v.val_acc) << '\n';
    loss << r.variant << ',' << num(v.train_loss) << ',' << num(v.val_loss) << '\n';
  }
  if (!acc || !loss) throw IoError("failed writing tables in " + dir.string());
}

void emit_report(const RunReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "report.json");
    f << report.to_json().dump(2) << '\n';
  }
  {
    const auto v = final_values(report);
    auto f = open_out(dir / "summary.csv");
    f << "variant,training_accuracy,validation_accuracy,training_loss,validation_loss\n";
    f << report.variant << ',' << num(v.train_acc) << ',' << num(v.val_acc) << ',' << num(v.train_loss) << ','
      << num(v.val_loss) << '\n';
  }
  {
    auto f = open_out(dir / "history.csv");
    f << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    for (const auto& r : report.history) {
      f << r.epoch << ',' << num(r.train_loss) << ',' << num(r.val_loss) << ',' << num(r.train_acc) << ','
        << num(r.val_acc) << '\n';
    }
    if (!f) throw IoError("failed writing history.csv");
  }
  emit_tables({report}, dir);
}

RunReport read_report(const fs::path& report_json) {
  std::ifstream f(report_json);
  if (!f) throw IoError("cannot read " + report_json.string());
  try {
    return RunReport::from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(report_json.string() + ": " + e.what());
  }
}

std::string canonical_report_text(const nlohmann::json& report) {
  nlohmann::json copy = report;
  copy.erase("metadata");
  return copy.dump();
}

}  // namespace ceimven
