// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "ceimven/error.hpp"
#include "ceimven/model.hpp"
#include "ceimven/rng.hpp"

namespace ceimven {

namespace fs = std::filesystem;

int class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (name == kClassNames[i]) return static_cast<int>(i);
  }
  throw DataError("unknown class '" + std::string(name) + "'");
}

nlohmann::json TransformDescriptor::to_json() const {
  return {{"hflip", hflip},       {"vflip", vflip}, {"rotation_deg", rotation_deg}, {"shift_x", shift_x},
          {"shift_y", shift_y},   {"zoom", zoom},   {"brightness", brightness}};
}

TransformDescriptor TransformDescriptor::from_json(const nlohmann::json& j) {
  TransformDescriptor t;
  t.hflip = j.value("hflip", false);
  t.vflip = j.value("vflip", false);
  t.rotation_deg = j.value("rotation_deg", 0.0);
  t.shift_x = j.value("shift_x", 0.0);
  t.shift_y = j.value("shift_y", 0.0);
  t.zoom = j.value("zoom", 1.0);
  t.brightness = j.value("brightness", 1.0);
  return t;
}

std::array<std::size_t, 3> Manifest::class_counts() const {
  std::array<std::size_t, 3> counts{};
  for (const auto& e : entries) ++counts.at(static_cast<std::size_t>(e.label));
  return counts;
}

std::size_t Manifest::original_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                [](const ManifestEntry& e) { return e.is_original(); }));
}

std::size_t Manifest::augmented_count() const { return entries.size() - original_count(); }

nlohmann::json Manifest::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j = {{"id", e.id},       {"class", kClassNames.at(static_cast<std::size_t>(e.label))},
                        {"image", e.image}, {"masks", e.masks},
                        {"width", e.width}, {"height", e.height},
                        {"channels", e.channels}};
    if (!e.is_original()) {
      j["parent"] = e.parent;
      j["transform"] = e.transform ? e.transform->to_json() : nlohmann::json(nullptr);
    }
    list.push_back(std::move(j));
  }
  const auto counts = class_counts();
  return {{"root", root},
          {"counts", {{kClassNames[0], counts[0]}, {kClassNames[1], counts[1]}, {kClassNames[2], counts[2]}}},
          {"originals", original_count()},
          {"augmented", augmented_count()},
          {"entries", list}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.root = j.value("root", std::string{});
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.label = class_from_name(e.at("class").get<std::string>());
      entry.image = e.value("image", std::string{});
      entry.masks = e.value("masks", std::vector<std::string>{});
      entry.width = e.value("width", std::size_t{0});
      entry.height = e.value("height", std::size_t{0});
      entry.channels = e.value("channels", std::size_t{0});
      entry.parent = e.value("parent", std::string{});
      if (e.contains("transform") && e.at("transform").is_object()) {
        entry.transform = TransformDescriptor::from_json(e.at("transform"));
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest ingest_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  static const std::regex kMaskPattern(R"((.+)_mask(_\d+)?)");
  Manifest manifest;
  manifest.root = root.string();
  for (std::size_t label = 0; label < kClassNames.size(); ++label) {
    const fs::path dir = root / kClassNames[label];
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& f : fs::directory_iterator(dir)) {
        if (f.is_regular_file() && f.path().extension() == ".png") files.push_back(f.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, std::vector<fs::path>> masks;
    std::vector<fs::path> images;
    for (const auto& f : files) {
      std::smatch m;
      const std::string stem = f.stem().string();
      if (std::regex_match(stem, m, kMaskPattern)) {
        masks[m[1].str()].push_back(f);
      } else {
        images.push_back(f);
      }
    }
    if (images.empty()) spdlog::warn("class folder {} has no images", dir.string());
    std::map<std::string, bool> known;
    for (const auto& img : images) known[img.stem().string()] = true;
    for (const auto& [stem, paths] : masks) {
      if (!known.count(stem)) throw DataError("mask without image: " + paths.front().string());
    }
    for (const auto& img_path : images) {
      const Image img = read_png(img_path);
      ManifestEntry e;
      e.id = std::string(kClassNames[label]) + "/" + img_path.stem().string();
      e.label = static_cast<int>(label);
      e.image = fs::relative(img_path, root).generic_string();
      e.width = img.width;
      e.height = img.height;
      e.channels = img.channels;
      if (const auto it = masks.find(img_path.stem().string()); it != masks.end()) {
        for (const auto& mp : it->second) {
          const Image mask = read_png(mp);
          if (mask.width != img.width || mask.height != img.height) {
            throw DataError("mask " + mp.string() + " does not match its image size");
          }
          e.masks.push_back(fs::relative(mp, root).generic_string());
        }
      }
      manifest.entries.push_back(std::move(e));
    }
  }
  const auto counts = manifest.class_counts();
  spdlog::info("ingested {} images ({} benign, {} malignant, {} normal)", manifest.entries.size(), counts[0],
               counts[1], counts[2]);
  return manifest;
}

Tensor preprocess(const Image& image, std::size_t size) {
  if (image.width == 0 || image.height == 0) throw DataError("cannot preprocess a zero-sized image");
  return resize_bilinear(image_to_tensor(image), size, size);
}

Tensor preprocess_masks(const std::vector<Image>& masks, std::size_t size) {
  if (masks.empty()) throw ValueError("preprocess_masks: no masks");
  const std::size_t w = masks.front().width, h = masks.front().height;
  std::vector<float> merged(w * h, 0.0f);
  for (const auto& m : masks) {
    if (m.width != w || m.height != h) throw DataError("masks of one image differ in size");
    for (std::size_t i = 0; i < w * h; ++i) {
      std::uint8_t v = 0;
      for (std::size_t c = 0; c < m.channels; ++c) v = std::max(v, m.pixels[i * m.channels + c]);
      if (v > 127) merged[i] = 1.0f;
    }
  }
  Tensor resized = resize_nearest(Tensor(Shape{h, w, 1}, std::move(merged)), size, size);
  for (auto& v : resized.mutable_data()) v = v >= 0.5f ? 1.0f : 0.0f;
  return resized;
}

Sample load_sample(const fs::path& root, const ManifestEntry& entry, std::size_t size) {
  Sample s;
  s.id = entry.id;
  s.label = entry.label;
  s.image = preprocess(read_png(root / entry.image), size);
  if (!entry.masks.empty()) {
    std::vector<Image> masks;
    for (const auto& m : entry.masks) masks.push_back(read_png(root / m));
    s.mask = preprocess_masks(masks, size);
  }
  return s;
}

void AugmentConfig::validate() const {
  if (per_original < 0) throw ValueError("augmentation count must be >= 0");
  if (shift_range < 0.0 || shift_range >= 1.0) throw ValueError("shift_range must be in [0, 1)");
  if (!(zoom_min > 0.0) || zoom_max < zoom_min) throw ValueError("zoom range must be positive and ordered");
  if (brightness_min < 0.0 || brightness_max < brightness_min) throw ValueError("bad brightness range");
  if (rotation_range < 0.0 || rotation_range > 360.0) throw ValueError("rotation_range must be in [0, 360]");
}

nlohmann::json AugmentConfig::to_json() const {
  return {{"target_total", target_total},     {"per_original", per_original},
          {"hflip", hflip},                   {"vflip", vflip},
          {"rotation_range", rotation_range}, {"shift_range", shift_range},
          {"zoom_min", zoom_min},             {"zoom_max", zoom_max},
          {"brightness_min", brightness_min}, {"brightness_max", brightness_max}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c;
  c.target_total = j.value("target_total", c.target_total);
  c.per_original = j.value("per_original", c.per_original);
  c.hflip = j.value("hflip", c.hflip);
  c.vflip = j.value("vflip", c.vflip);
  c.rotation_range = j.value("rotation_range", c.rotation_range);
  c.shift_range = j.value("shift_range", c.shift_range);
  c.zoom_min = j.value("zoom_min", c.zoom_min);
  c.zoom_max = j.value("zoom_max", c.zoom_max);
  c.brightness_min = j.value("brightness_min", c.brightness_min);
  c.brightness_max = j.value("brightness_max", c.brightness_max);
  return c;
}

std::vector<std::size_t> augmentation_counts(std::size_t originals, const AugmentConfig& config) {
  config.validate();
  if (config.target_total == 0) return std::vector<std::size_t>(originals, static_cast<std::size_t>(config.per_original));
  if (originals == 0) return {};
  if (config.target_total < originals) {
    throw ValueError("target_total " + std::to_string(config.target_total) + " is below the " +
                     std::to_string(originals) + " originals");
  }
  const std::size_t extra = config.target_total - originals;
  std::vector<std::size_t> counts(originals, extra / originals);
  for (std::size_t i = 0; i < extra % originals; ++i) ++counts[i];
  return counts;
}

std::vector<TransformDescriptor> plan_augmentation(const std::string& parent_id, std::size_t count,
                                                   const AugmentConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, parent_id));
  std::vector<TransformDescriptor> out(count);
  for (auto& t : out) {
    // Every field is drawn even when disabled so toggling one transform does
    // not reshuffle the others.
    const bool h = rng.bernoulli(0.5), v = rng.bernoulli(0.5);
    t.hflip = config.hflip && h;
    t.vflip = config.vflip && v;
    t.rotation_deg = rng.uniform() * config.rotation_range;
    t.shift_x = rng.uniform(-config.shift_range, config.shift_range);
    t.shift_y = rng.uniform(-config.shift_range, config.shift_range);
    t.zoom = rng.uniform(config.zoom_min, config.zoom_max);
    t.brightness = rng.uniform(config.brightness_min, config.brightness_max);
  }
  return out;
}

namespace {

Tensor flip(const Tensor& x, bool horizontal) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto src = x.data();
  std::vector<float> out(src.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const std::size_t sy = horizontal ? y : h - 1 - y;
      const std::size_t sx = horizontal ? w - 1 - xx : xx;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((sy * w + sx) * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>((y * w + xx) * c));
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor warp(const Tensor& x, const TransformDescriptor& t, bool nearest) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto src = x.data();
  std::vector<float> out(src.size(), 0.0f);
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cx = static_cast<double>(w) / 2.0, cy = static_cast<double>(h) / 2.0;
  const double tx = t.shift_x * static_cast<double>(w), ty = t.shift_y * static_cast<double>(h);
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);
  for (std::size_t oy = 0; oy < h; ++oy) {
    for (std::size_t ox = 0; ox < w; ++ox) {
      // Inverse map: undo shift, rotation and zoom about the centre.
      const double u = static_cast<double>(ox) + 0.5 - cx - tx;
      const double v = static_cast<double>(oy) + 0.5 - cy - ty;
      const double sx = (cos_t * u + sin_t * v) / t.zoom + cx;
      const double sy = (-sin_t * u + cos_t * v) / t.zoom + cy;
      if (sx < 0.0 || sy < 0.0 || sx >= fw || sy >= fh) continue;
      float* dst = out.data() + (oy * w + ox) * c;
      if (nearest) {
        const std::size_t px = static_cast<std::size_t>(sx), py = static_cast<std::size_t>(sy);
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[(py * w + px) * c + ch];
        continue;
      }
      const double fx = std::clamp(sx - 0.5, 0.0, fw - 1.0), fy = std::clamp(sy - 0.5, 0.0, fh - 1.0);
      const std::size_t x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = src[(y0 * w + x0) * c + ch] * (1 - ax) + src[(y0 * w + x1) * c + ch] * ax;
        const double bot = src[(y1 * w + x0) * c + ch] * (1 - ax) + src[(y1 * w + x1) * c + ch] * ax;
        dst[ch] = static_cast<float>(top * (1 - ay) + bot * ay);
      }
    }
  }
  return Tensor(x.shape(), std::move(out));
}

}  // namespace

Tensor apply_transform(const Tensor& image, const TransformDescriptor& t, bool is_mask) {
  if (image.rank() != 3) throw ShapeError("apply_transform: expected [h,w,c], got " + shape_str(image.shape()));
  if (!(t.zoom > 0.0)) throw ValueError("apply_transform: zoom must be positive");
  Tensor out = image;
  if (t.hflip) out = flip(out, true);
  if (t.vflip) out = flip(out, false);
  if (!t.affine_is_identity()) out = warp(out, t, is_mask);
  if (!is_mask && t.brightness != 1.0) {
    if (out.impl() == image.impl()) out = out.clone();
    for (auto& v : out.mutable_data()) v = std::clamp(static_cast<float>(v * t.brightness), 0.0f, 1.0f);
  }
  return out.impl() == image.impl() ? image.clone() : out;
}

std::vector<Sample> augment(const Sample& sample, std::size_t count, const AugmentConfig& config,
                            std::uint64_t seed) {
  std::vector<Sample> out;
  const auto plan = plan_augmentation(sample.id, count, config, seed);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    Sample child;
    child.id = sample.id + "__aug" + std::to_string(k);
    child.label = sample.label;
    child.parent = sample.id;
    child.transform = plan[k];
    child.image = apply_transform(sample.image, plan[k], false);
    if (sample.mask.defined()) child.mask = apply_transform(sample.mask, plan[k], true);
    out.push_back(std::move(child));
  }
  return out;
}

Manifest plan_corpus(const Manifest& manifest, const AugmentConfig& config, std::uint64_t seed) {
  std::vector<const ManifestEntry*> originals;
  for (const auto& e : manifest.entries) {
    if (e.is_original()) originals.push_back(&e);
  }
  const auto counts = augmentation_counts(originals.size(), config);
  Manifest out;
  out.root = manifest.root;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const ManifestEntry& parent = *originals[i];
    out.entries.push_back(parent);
    const auto plan = plan_augmentation(parent.id, counts[i], config, seed);
    for (std::size_t k = 0; k < plan.size(); ++k) {
      ManifestEntry child;
      child.id = parent.id + "__aug" + std::to_string(k);
      child.label = parent.label;
      child.width = parent.width;
      child.height = parent.height;
      child.channels = parent.channels;
      child.parent = parent.id;
      child.transform = plan[k];
      out.entries.push_back(std::move(child));
    }
  }
  return out;
}

std::vector<Sample> build_corpus(const fs::path& root, const Manifest& planned, std::size_t size,
                                 std::size_t workers) {
  // Group children under their parent; each group is one unit of work.
  std::vector<std::size_t> group_start;
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < planned.entries.size(); ++i) {
    const auto& e = planned.entries[i];
    if (e.is_original()) {
      group_start.push_back(i);
      position[e.id] = i;
    } else if (!position.count(e.parent)) {
      throw DataError("augmented entry " + e.id + " precedes or lacks its parent " + e.parent);
    }
  }
  std::vector<Sample> out(planned.entries.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(group_start.size());
  auto work = [&] {
    for (std::size_t g = next++; g < group_start.size(); g = next++) {
      try {
        const std::size_t begin = group_start[g];
        const std::size_t end = g + 1 < group_start.size() ? group_start[g + 1] : planned.entries.size();
        const Sample parent = load_sample(root, planned.entries[begin], size);
        out[begin] = parent;
        for (std::size_t i = begin + 1; i < end; ++i) {
          const auto& e = planned.entries[i];
          if (e.parent != parent.id || !e.transform) {
            throw DataError("augmented entry " + e.id + " is not grouped after its parent");
          }
          Sample child;
          child.id = e.id;
          child.label = e.label;
          child.parent = e.parent;
          child.transform = e.transform;
          child.image = apply_transform(parent.image, *e.transform, false);
          if (parent.mask.defined()) child.mask = apply_transform(parent.mask, *e.transform, true);
          out[i] = std::move(child);
        }
      } catch (...) {
        errors[g] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, group_start.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Manifest write_corpus(const std::vector<Sample>& samples, const Manifest& planned, const fs::path& out_dir) {
  if (samples.size() != planned.entries.size()) throw ValueError("write_corpus: samples do not match manifest");
  Manifest out;
  out.root = out_dir.string();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    ManifestEntry e = planned.entries[i];
    if (e.id != s.id) throw ValueError("write_corpus: sample " + s.id + " out of manifest order");
    const fs::path image_rel = fs::path(s.id + ".png");
    fs::create_directories((out_dir / image_rel).parent_path());
    write_png(out_dir / image_rel, tensor_to_image(s.image));
    e.image = image_rel.generic_string();
    e.masks.clear();
    if (s.mask.defined()) {
      const fs::path mask_rel = fs::path(s.id + "_mask.png");
      write_png(out_dir / mask_rel, tensor_to_image(s.mask));
      e.masks.push_back(mask_rel.generic_string());
    }
    e.height = s.image.dim(0);
    e.width = s.image.dim(1);
    e.channels = s.image.dim(2);
    out.entries.push_back(std::move(e));
  }
  std::ofstream f(out_dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  // Paths inside the file are relative to the directory holding it, so the
  // tree can be moved or compared byte for byte.
  Manifest on_disk = out;
  on_disk.root = ".";
  f << on_disk.to_json().dump(2) << '\n';
  return out;
}

nlohmann::json DatasetSplit::to_json() const {
  return {{"seed", seed}, {"ratios", ratios}, {"train", train}, {"validation", validation}, {"test", test}};
}

DatasetSplit DatasetSplit::from_json(const nlohmann::json& j) {
  DatasetSplit s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratios = j.at("ratios").get<std::array<double, 3>>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split: ") + e.what());
  }
  return s;
}

DatasetSplit split(const Manifest& manifest, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0) || r > 1.0) throw ValueError("split ratios must lie in [0, 1]");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ValueError("split ratios must sum to 1");

  std::array<std::vector<std::string>, 3> by_class;
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& e : manifest.entries) {
    if (e.is_original()) {
      by_class.at(static_cast<std::size_t>(e.label)).push_back(e.id);
    } else {
      children[e.parent].push_back(e.id);
    }
  }
  DatasetSplit out;
  out.seed = seed;
  out.ratios = ratios;
  std::array<std::vector<std::string>*, 3> lists{&out.train, &out.validation, &out.test};
  constexpr std::array<const char*, 3> kSplitNames{"train", "validation", "test"};
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto ids = by_class[c];
    if (ids.empty()) continue;
    Rng rng(derive_seed(seed, std::string("split/") + kClassNames[c]));
    rng.shuffle(ids);
    const double n = static_cast<double>(ids.size());
    // The tiny slack keeps products such as 10 * 0.1 from flooring to 0.
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
    const std::array<std::size_t, 3> sizes{ids.size() - n_val - n_test, n_val, n_test};
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (ratios[s] > 0.0 && sizes[s] == 0) {
        throw DataError(std::string("split '") + kSplitNames[s] + "' would receive no " + kClassNames[c] +
                        " sample (" + std::to_string(ids.size()) + " available)");
      }
      for (std::size_t k = 0; k < sizes[s]; ++k, ++at) {
        lists[s]->push_back(ids[at]);
        if (const auto it = children.find(ids[at]); it != children.end()) {
          lists[s]->insert(lists[s]->end(), it->second.begin(), it->second.end());
        }
      }
    }
  }
  return out;
}

std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::string>& ids) {
  std::map<std::string, const Sample*> index;
  for (const auto& s : samples) index[s.id] = &s;
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("sample " + id + " not in corpus");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace ceimven
