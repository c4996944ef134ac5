// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "ceimven/train.hpp"

namespace ceimven {

/// Writes a BUSI-style tree root/{benign,malignant,normal}/ with `per_class`
/// gray images of side `size` and a "_mask" companion each. Benign lesions
/// are bright discs and malignant ones bright squares; normal images get an
/// empty mask. Deterministic in (per_class, size, seed).
void write_synthetic_busi(const std::filesystem::path& root, std::size_t per_class, std::size_t size,
                          std::uint64_t seed);

/// Three classes separated by mean intensity under uniform noise; `n` examples of side `size`, labels cycling 0, 1, 2.
ExampleSet separable_set(std::size_t n, std::size_t size, std::uint64_t seed);

/// One bright axis-aligned square per image on a dark noisy background.
/// Boxes are in the 224 frame; the image is rendered at `size`. Labels
/// alternate benign / malignant.
ExampleSet square_detection_set(std::size_t n, std::size_t size, std::uint64_t seed);

}  // namespace ceimven
