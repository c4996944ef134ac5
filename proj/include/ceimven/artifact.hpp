// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceimven/model.hpp"

namespace ceimven {

// File layout:
//   bytes 0..7   "CEIMVART"
//   bytes 8..15  header length L, uint64 little-endian
//   next L bytes JSON header {format, format_version, task, config, layers,
//                tensors: [{name, shape, offset, kind, trainable}],
//                payload_bytes, checksum}
//   rest         payload: float32 little-endian arrays in manifest order
// `offset` is in bytes from the start of the payload; `checksum` is the
// CRC-32 of the payload as lowercase hex.
inline constexpr char kArtifactMagic[8] = {'C', 'E', 'I', 'M', 'V', 'A', 'R', 'T'};
inline constexpr int kArtifactVersion = 1;

void save_model(const Model& model, const std::filesystem::path& path,
                const nlohmann::json& extra = nlohmann::json::object());

/// Reads and validates the whole file before building the model, so a bad
/// artifact never yields a partially loaded one.
Model load_model(const std::filesystem::path& path);

/// Header of an artifact without its payload (version is still checked).
nlohmann::json read_artifact_header(const std::filesystem::path& path);

struct ImportReport {
  std::vector<std::string> matched;
  /// Backbone tensors of the model that the artifact did not provide.
  std::vector<std::string> unmatched;
  /// Backbone tensors of the artifact that the model does not have.
  std::vector<std::string> ignored;

  nlohmann::json to_json() const;
};

/// Copies "backbone/..." tensors (parameters and running statistics) from an
/// artifact into the model. Head tensors are never touched. Throws
/// ImportError when nothing matches or a matched name differs in shape; the
/// model is unchanged in both cases.
ImportReport import_backbone_weights(Model& model, const std::filesystem::path& path);

std::uint32_t crc32_of(const void* data, std::size_t size);

}  // namespace ceimven
