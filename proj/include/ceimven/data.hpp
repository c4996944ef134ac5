// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/image.hpp"
#include "ceimven/tensor.hpp"

namespace ceimven {

/// Index into kClassNames; throws DataError for anything else.
int class_from_name(std::string_view name);

/// Parameters of one augmentation. Geometry is applied to image and mask
/// alike; brightness only to the image.
struct TransformDescriptor {
  bool hflip = false;
  bool vflip = false;
  double rotation_deg = 0.0;  // counter-clockwise about the image centre
  double shift_x = 0.0;       // fraction of width, positive moves content right
  double shift_y = 0.0;       // fraction of height, positive moves content down
  double zoom = 1.0;          // > 1 magnifies
  double brightness = 1.0;

  /// True when rotation, shift and zoom leave pixels in place.
  bool affine_is_identity() const { return rotation_deg == 0.0 && shift_x == 0.0 && shift_y == 0.0 && zoom == 1.0; }
  nlohmann::json to_json() const;
  static TransformDescriptor from_json(const nlohmann::json& j);
};

struct ManifestEntry {
  std::string id;  // "<class>/<file stem>", children append "__aug<k>"
  int label = 0;
  std::string image;               // path relative to the manifest root; empty for unwritten children
  std::vector<std::string> masks;  // same, possibly several per image
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::string parent;  // empty for originals
  std::optional<TransformDescriptor> transform;

  bool is_original() const { return parent.empty(); }
};

struct Manifest {
  std::string root;
  std::vector<ManifestEntry> entries;

  std::array<std::size_t, 3> class_counts() const;
  std::size_t original_count() const;
  std::size_t augmented_count() const;
  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

/// Scans root/{benign,malignant,normal}/*.png. Files named "<stem>_mask.png"
/// or "<stem>_mask_<k>.png" are masks of "<stem>.png". Every file is decoded
/// so broken inputs fail here, naming the file.
Manifest ingest_dataset(const std::filesystem::path& root);

struct Sample {
  std::string id;
  int label = 0;
  Tensor image;  // [s, s, c] in [0, 1]
  Tensor mask;   // [s, s, 1] of {0, 1}; undefined when the entry has no mask
  std::string parent;
  std::optional<TransformDescriptor> transform;
};

/// Bilinear resize to size x size followed by division by 255.
Tensor preprocess(const Image& image, std::size_t size = 224);
/// Pixelwise maximum of the binarised masks, nearest-resized and
/// re-thresholded to {0, 1}. Masks must share one size.
Tensor preprocess_masks(const std::vector<Image>& masks, std::size_t size = 224);

/// Decodes and preprocesses one original entry.
Sample load_sample(const std::filesystem::path& root, const ManifestEntry& entry, std::size_t size = 224);

struct AugmentConfig {
  /// When positive, children are added until the corpus holds this many
  /// samples, spread as evenly as possible (earlier originals get the extra).
  std::size_t target_total = 0;
  /// Used when target_total is 0.
  int per_original = 0;
  bool hflip = true;
  bool vflip = true;
  double rotation_range = 360.0;  // degrees, uniform in [0, range)
  double shift_range = 0.10;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  double brightness_min = 0.8;
  double brightness_max = 1.2;

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

/// Number of children for each of n originals.
std::vector<std::size_t> augmentation_counts(std::size_t originals, const AugmentConfig& config);

/// `count` descriptors for one parent, drawn from a stream derived from
/// (seed, parent_id) only.
std::vector<TransformDescriptor> plan_augmentation(const std::string& parent_id, std::size_t count,
                                                   const AugmentConfig& config, std::uint64_t seed);

/// Applies a descriptor to [h, w, c]. Masks use nearest sampling and skip
/// brightness; images are bilinear and clipped to [0, 1]. Exposed area is 0.
Tensor apply_transform(const Tensor& image, const TransformDescriptor& t, bool is_mask);

/// Children of one sample, ids "<id>__aug<k>".
std::vector<Sample> augment(const Sample& sample, std::size_t count, const AugmentConfig& config,
                            std::uint64_t seed);

/// Originals of `manifest` followed, each, by its planned children (with
/// descriptors, no pixels). Pure function of (manifest, config, seed).
Manifest plan_corpus(const Manifest& manifest, const AugmentConfig& config, std::uint64_t seed);

/// Materialises a planned manifest. Output order matches the manifest and
/// does not depend on `workers`.
std::vector<Sample> build_corpus(const std::filesystem::path& root, const Manifest& planned,
                                 std::size_t size = 224, std::size_t workers = 1);

/// Writes every sample as PNG under out_dir/<id>.png (+ "_mask.png") and
/// returns the manifest of the written tree. The copy saved as manifest.json
/// records its root as "." so the tree is relocatable.
Manifest write_corpus(const std::vector<Sample>& samples, const Manifest& planned,
                      const std::filesystem::path& out_dir);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};

  nlohmann::json to_json() const;
  static DatasetSplit from_json(const nlohmann::json& j);
};

/// Stratified split of originals (floor for validation and test, the rest to
/// train); children follow their parent. Throws DataError when a split with a
/// positive ratio would get no sample of a non-empty class.
DatasetSplit split(const Manifest& manifest, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Samples whose ids are listed, in list order.
std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::string>& ids);

}  // namespace ceimven
