// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ceimven/artifact.hpp"
#include "ceimven/error.hpp"
#include "ceimven/image.hpp"
#include "ceimven/report.hpp"
#include "ceimven/rng.hpp"
#include "ceimven/roi.hpp"
#include "ceimven/scaling.hpp"

namespace ceimven {

namespace fs = std::filesystem;

nlohmann::json RunConfig::to_json() const {
  return {{"dataset_root", dataset_root},
          {"output_dir", output_dir},
          {"task", task_name(task)},
          {"family", family_name(model.family)},
          {"variant", model.variant_index},
          {"seed", seed},
          {"num_classes", model.num_classes},
          {"intermediate_dense_units", model.intermediate_dense_units},
          {"freeze_backbone", model.freeze_backbone},
          {"channel_scale", model.channel_scale},
          {"input_size", model.input_size},
          {"workers", workers},
          {"split_ratios", split_ratios},
          {"augment_target_total", augment.target_total},
          {"augment_per_original", augment.per_original},
          {"augment_hflip", augment.hflip},
          {"augment_vflip", augment.vflip},
          {"augment_rotation_range", augment.rotation_range},
          {"augment_shift_range", augment.shift_range},
          {"augment_zoom_min", augment.zoom_min},
          {"augment_zoom_max", augment.zoom_max},
          {"augment_brightness_min", augment.brightness_min},
          {"augment_brightness_max", augment.brightness_max},
          {"batch_size", train.batch_size},
          {"epochs", train.epochs},
          {"learning_rate", train.learning_rate},
          {"momentum", train.momentum},
          {"desk_scale", train.desk_scale},
          {"checkpoint_every", train.checkpoint_every},
          {"lr_decay_factor", train.lr_decay_factor},
          {"lr_decay_every", train.lr_decay_every},
          {"lambda_box", train.lambda_box}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("config must be a JSON object");
  const auto known = RunConfig{}.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValueError("unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    c.dataset_root = j.value("dataset_root", c.dataset_root);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.task = task_from_name(j.value("task", std::string(task_name(c.task))));
    c.model.family = family_from_name(j.value("family", std::string(family_name(c.model.family))));
    c.model.variant_index = j.value("variant", c.model.variant_index);
    c.seed = j.value("seed", c.seed);
    c.model.num_classes = j.value("num_classes", c.model.num_classes);
    c.model.intermediate_dense_units = j.value("intermediate_dense_units", c.model.intermediate_dense_units);
    c.model.freeze_backbone = j.value("freeze_backbone", c.model.freeze_backbone);
    c.model.channel_scale = j.value("channel_scale", c.model.channel_scale);
    c.model.input_size = j.value("input_size", c.model.input_size);
    c.workers = j.value("workers", c.workers);
    c.split_ratios = j.value("split_ratios", c.split_ratios);
    c.augment.target_total = j.value("augment_target_total", c.augment.target_total);
    c.augment.per_original = j.value("augment_per_original", c.augment.per_original);
    c.augment.hflip = j.value("augment_hflip", c.augment.hflip);
    c.augment.vflip = j.value("augment_vflip", c.augment.vflip);
    c.augment.rotation_range = j.value("augment_rotation_range", c.augment.rotation_range);
    c.augment.shift_range = j.value("augment_shift_range", c.augment.shift_range);
    c.augment.zoom_min = j.value("augment_zoom_min", c.augment.zoom_min);
    c.augment.zoom_max = j.value("augment_zoom_max", c.augment.zoom_max);
    c.augment.brightness_min = j.value("augment_brightness_min", c.augment.brightness_min);
    c.augment.brightness_max = j.value("augment_brightness_max", c.augment.brightness_max);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
    c.train.momentum = j.value("momentum", c.train.momentum);
    c.train.desk_scale = j.value("desk_scale", c.train.desk_scale);
    c.train.checkpoint_every = j.value("checkpoint_every", c.train.checkpoint_every);
    c.train.lr_decay_factor = j.value("lr_decay_factor", c.train.lr_decay_factor);
    c.train.lr_decay_every = j.value("lr_decay_every", c.train.lr_decay_every);
    c.train.lambda_box = j.value("lambda_box", c.train.lambda_box);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::effective() const {
  RunConfig c = *this;
  if (c.train.desk_scale) apply_desk_profile(c.train, c.model);
  c.train.seed = c.seed;
  c.model = c.model.resolved();
  c.model.validate();
  c.augment.validate();
  c.train.validate();
  return c;
}

std::string RunConfig::hash() const {
  auto j = effective().to_json();
  // Neither changes results, so reruns with another output root or worker
  // count land in the same run id.
  j.erase("output_dir");
  j.erase("workers");
  return fmt::format("{:016x}", fnv1a64(j.dump()));
}

fs::path resolve_output_root(const std::string& flag, const RunConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv("CEIMVEN_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool desk_scale = false;
  std::string family;
  std::optional<int> variant;
  std::string out;
  bool freeze_backbone = false;
  std::string data;
  std::string model_path;
  std::string image_path;
  std::vector<std::string> runs;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValueError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

RunConfig resolve_config(const Options& o) {
  RunConfig rc = o.config_path.empty() ? RunConfig{} : RunConfig::from_json(read_json(o.config_path));
  if (o.seed) rc.seed = *o.seed;
  if (o.desk_scale) rc.train.desk_scale = true;
  if (!o.family.empty()) rc.model.family = family_from_name(o.family);
  if (o.variant) rc.model.variant_index = *o.variant;
  if (o.freeze_backbone) rc.model.freeze_backbone = true;
  if (!o.data.empty()) rc.dataset_root = o.data;
  rc.output_dir = resolve_output_root(o.out, rc).string();
  return rc.effective();
}

// Creates the run directory and drops the effective config snapshot in it.
fs::path prepare_run(const RunConfig& rc) {
  const fs::path dir = fs::path(rc.output_dir) / ("run-" + rc.hash());
  fs::create_directories(dir);
  write_json(dir / "config.json", rc.to_json());
  spdlog::info("config {} seed {} -> {}", rc.to_json().dump(), rc.seed, dir.string());
  return dir;
}

void require_dataset(const RunConfig& rc) {
  if (rc.dataset_root.empty()) throw ValueError("dataset_root is not set (config key or --data)");
}

std::uint64_t stage_seed(const RunConfig& rc, std::string_view stage) { return derive_seed(rc.seed, stage); }

struct Pipeline {
  Manifest manifest;
  Manifest planned;
  std::vector<Sample> corpus;
  DatasetSplit split;
};

Pipeline run_pipeline(const RunConfig& rc, bool materialise) {
  require_dataset(rc);
  Pipeline p;
  p.manifest = ingest_dataset(rc.dataset_root);
  p.planned = plan_corpus(p.manifest, rc.augment, stage_seed(rc, "augment"));
  p.split = split(p.planned, rc.split_ratios, stage_seed(rc, "split"));
  if (materialise) p.corpus = build_corpus(rc.dataset_root, p.planned, kInputResolution, rc.workers);
  return p;
}

ExampleSet examples(const Pipeline& p, const std::vector<std::string>& ids, const RunConfig& rc) {
  return to_examples(select(p.corpus, ids), rc.model.input_size);
}

nlohmann::json metadata(std::string_view command, std::chrono::steady_clock::time_point start) {
  const auto now = std::chrono::system_clock::now();
  return {{"command", command},
          {"timestamp", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)))},
          {"elapsed_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
}

nlohmann::json report_config(const RunConfig& rc) {
  auto j = rc.to_json();
  j.erase("output_dir");
  return j;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_ingest(const Options& o) {
  const RunConfig rc = resolve_config(o);
  require_dataset(rc);
  const fs::path dir = prepare_run(rc);
  const Manifest m = ingest_dataset(rc.dataset_root);
  write_json(dir / "manifest.json", m.to_json());
  const auto counts = m.class_counts();
  print({{"manifest", (dir / "manifest.json").string()},
         {"images", m.entries.size()},
         {"counts", {{kClassNames[0], counts[0]}, {kClassNames[1], counts[1]}, {kClassNames[2], counts[2]}}}});
  return kExitOk;
}

int cmd_augment(const Options& o) {
  const RunConfig rc = resolve_config(o);
  const fs::path dir = prepare_run(rc);
  const Pipeline p = run_pipeline(rc, true);
  const Manifest written = write_corpus(p.corpus, p.planned, dir / "corpus");
  print({{"corpus", (dir / "corpus").string()},
         {"originals", written.original_count()},
         {"augmented", written.augmented_count()},
         {"total", written.entries.size()}});
  return kExitOk;
}

int cmd_split(const Options& o) {
  const RunConfig rc = resolve_config(o);
  const fs::path dir = prepare_run(rc);
  const Pipeline p = run_pipeline(rc, false);
  write_json(dir / "split.json", p.split.to_json());
  print({{"split", (dir / "split.json").string()},
         {"train", p.split.train.size()},
         {"validation", p.split.validation.size()},
         {"test", p.split.test.size()}});
  return kExitOk;
}

int cmd_train(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig rc = resolve_config(o);
  const fs::path dir = prepare_run(rc);
  const Pipeline p = run_pipeline(rc, true);
  const ExampleSet train_set = examples(p, p.split.train, rc);
  const ExampleSet val_set = examples(p, p.split.validation, rc);
  TrainConfig tc = rc.train;
  if (tc.checkpoint_every > 0) tc.checkpoint_dir = (dir / "checkpoints").string();
  const std::uint64_t model_seed = stage_seed(rc, "model");
  Model model = rc.task == Task::kClassify ? build_ceimven(rc.model, model_seed) : build_detector(rc.model, model_seed);
  const History history = rc.task == Task::kClassify ? train(model, train_set, val_set, tc)
                                                      : train_detector(model, train_set, val_set, tc);
  save_model(model, dir / "model.ceimv");
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history) hist.push_back(r.to_json());
  write_json(dir / "history.json", hist);

  RunReport report;
  report.variant = rc.model.variant().name();
  report.history = history;
  report.config = report_config(rc);
  if (!val_set.empty()) report.evaluation = evaluate(model, val_set);
  report.metadata = metadata("train", start);
  emit_report(report, dir);
  print({{"run_dir", dir.string()},
         {"model", (dir / "model.ceimv").string()},
         {"epochs", history.size()},
         {"train_accuracy", history.back().train_acc},
         {"train_loss", history.back().train_loss}});
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(o);
  const fs::path dir = prepare_run(rc);
  const fs::path model_path = o.model_path.empty() ? dir / "model.ceimv" : fs::path(o.model_path);
  Model model = load_model(model_path);
  const Pipeline p = run_pipeline(rc, true);
  const std::vector<std::string>& ids = p.split.test.empty() ? p.split.validation : p.split.test;
  const ExampleSet test_set = to_examples(select(p.corpus, ids), model.config().input_size);

  RunReport report;
  report.variant = model.config().variant().name();
  report.config = report_config(rc);
  report.evaluation = evaluate(model, test_set);
  if (fs::exists(dir / "history.json")) {
    for (const auto& r : read_json(dir / "history.json")) report.history.push_back(EpochRecord::from_json(r));
  }
  report.metadata = metadata("eval", start);
  emit_report(report, dir / "eval");
  if (model.task() == Task::kDetect) {
    const DetectionReport dr = evaluate_detector(model, test_set, rc.train.lambda_box);
    nlohmann::json dets = nlohmann::json::array();
    for (std::size_t i = 0; i < dr.detections.size(); ++i) dets.push_back(dr.detections[i].to_json(ids[i]));
    auto j = dr.to_json();
    j["detections"] = dets;
    write_json(dir / "eval" / "detections.json", j);
  }
  print({{"report", (dir / "eval" / "report.json").string()},
         {"accuracy", report.evaluation->accuracy},
         {"samples", report.evaluation->total}});
  return kExitOk;
}

Tensor load_image_batch(const Options& o, const Model& model) {
  if (o.image_path.empty()) throw ValueError("--image is required");
  const std::size_t s = model.config().input_size;
  const Tensor img = preprocess(read_png(o.image_path), s);
  return reshape(img, Shape{1, s, s, img.dim(2)});
}

Model load_cli_model(const Options& o) {
  if (o.model_path.empty()) throw ValueError("--model is required");
  return load_model(o.model_path);
}

int cmd_predict(const Options& o) {
  Model model = load_cli_model(o);
  const Prediction p = predict(model, load_image_batch(o, model));
  const auto probs = p.probs.data();
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < probs.size(); ++c) classes.push_back(c < kClassNames.size() ? kClassNames[c] : std::to_string(c));
  print({{"image", o.image_path},
         {"classes", classes},
         {"probabilities", std::vector<double>(probs.begin(), probs.end())},
         {"label", classes.at(static_cast<std::size_t>(p.labels.front()))}});
  return kExitOk;
}

int cmd_detect(const Options& o) {
  Model model = load_cli_model(o);
  const Detection d = detect(model, load_image_batch(o, model));
  print(d.to_json(fs::path(o.image_path).stem().string()));
  return kExitOk;
}

int cmd_report(const Options& o) {
  if (o.runs.empty()) throw ValueError("--runs needs at least one run directory");
  std::vector<RunReport> reports;
  for (const auto& r : o.runs) {
    const fs::path p = fs::is_directory(r) ? fs::path(r) / "report.json" : fs::path(r);
    reports.push_back(read_report(p));
  }
  const fs::path out = o.out.empty() ? fs::path("tables") : fs::path(o.out);
  emit_tables(reports, out);
  print({{"accuracy_table", (out / "accuracy_table.csv").string()},
         {"loss_table", (out / "loss_table.csv").string()},
         {"runs", reports.size()}});
  return kExitOk;
}

int cmd_variants() {
  print(variants_json());
  return kExitOk;
}

void print_error(const std::string& message, std::string_view kind, int code) {
  std::cerr << nlohmann::json{{"error", message}, {"kind", kind}, {"exit_code", code}}.dump() << std::endl;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  if (!spdlog::get("ceimven")) {
    auto logger = spdlog::stderr_color_mt("ceimven");
    spdlog::set_default_logger(logger);
  }
  CLI::App app{"CEIMVEN breast-ultrasound classification and ROI detection"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  int variant = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Master seed (overrides config)");
    sub->add_flag("--desk-scale", o.desk_scale, "CPU profile: channel_scale 0.1, 32px inputs, <=50 epochs, batch 16");
    sub->add_option("--family", o.family, "V1 or V2");
    sub->add_option("--variant", variant, "Variant index (b0 = 0)");
    sub->add_option("--out", o.out, "Output root (default $CEIMVEN_OUTPUT_DIR or ./runs)");
    sub->add_flag("--freeze-backbone", o.freeze_backbone, "Train the head only");
    sub->add_option("--data", o.data, "Dataset root (overrides config dataset_root)");
  };
  auto* ingest = app.add_subcommand("ingest", "Scan a BUSI-layout tree and write manifest.json");
  auto* augment_cmd = app.add_subcommand("augment", "Materialise the augmented corpus as PNG");
  auto* split_cmd = app.add_subcommand("split", "Write the stratified train/validation/test split");
  auto* train_cmd = app.add_subcommand("train", "Train a model and write report files");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on the test split");
  auto* predict_cmd = app.add_subcommand("predict", "Class probabilities for one image");
  auto* detect_cmd = app.add_subcommand("detect", "Detection record for one image");
  auto* variants = app.add_subcommand("variants", "Dump every variant spec as JSON");
  auto* report = app.add_subcommand("report", "Combine run reports into accuracy and loss tables");
  for (auto* sub : {ingest, augment_cmd, split_cmd, train_cmd, eval}) common(sub);
  eval->add_option("--model", o.model_path, "Model artifact (default: the run's model.ceimv)");
  for (auto* sub : {predict_cmd, detect_cmd}) {
    sub->add_option("--model", o.model_path, "Model artifact")->required();
    sub->add_option("--image", o.image_path, "PNG image")->required();
  }
  report->add_option("--runs", o.runs, "Run directories or report.json files")->required();
  report->add_option("--out", o.out, "Directory for the tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return kExitOk;
    }
    print_error(e.what(), "UsageError", kExitUsage);
    return kExitUsage;
  }
  for (auto* sub : {ingest, augment_cmd, split_cmd, train_cmd, eval}) {
    if (sub->parsed()) {
      if (sub->count("--seed") > 0) o.seed = seed;
      if (sub->count("--variant") > 0) o.variant = variant;
    }
  }

  try {
    if (ingest->parsed()) return cmd_ingest(o);
    if (augment_cmd->parsed()) return cmd_augment(o);
    if (split_cmd->parsed()) return cmd_split(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (predict_cmd->parsed()) return cmd_predict(o);
    if (detect_cmd->parsed()) return cmd_detect(o);
    if (variants->parsed()) return cmd_variants();
    if (report->parsed()) return cmd_report(o);
  } catch (const ValueError& e) {
    print_error(e.what(), "UsageError", kExitUsage);
    return kExitUsage;
  } catch (const ShapeError& e) {
    print_error(e.what(), "ShapeError", kExitUsage);
    return kExitUsage;
  } catch (const DataError& e) {
    print_error(e.what(), "DataError", kExitData);
    return kExitData;
  } catch (const ImportError& e) {
    print_error(e.what(), "ImportError", kExitData);
    return kExitData;
  } catch (const NumericError& e) {
    print_error(e.what(), "NumericError", kExitNumeric);
    return kExitNumeric;
  } catch (const ArtifactError& e) {
    print_error(e.what(), "ArtifactError", kExitIo);
    return kExitIo;
  } catch (const IoError& e) {
    print_error(e.what(), "IoError", kExitIo);
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    print_error(e.what(), "IoError", kExitIo);
    return kExitIo;
  } catch (const std::exception& e) {
    print_error(e.what(), "Error", kExitFailure);
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ceimven
