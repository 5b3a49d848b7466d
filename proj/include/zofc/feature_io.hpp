// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zofc/continual.hpp"
#include "zofc/numerics.hpp"

namespace zofc {

// Binary feature file, all integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "ZOFC"
//   4       4     u32 format version (1)
//   8       8     u64 example count N
//   16      4     u32 feature dim D
//   20      4     u32 label width W (labels must be < W)
//   24      4ND   f32 features, row-major
//   24+4ND  4N    u32 labels
//
// The file must end exactly after the labels.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;

struct FeatureDataset {
  /// Stored as float32 on disk; widened on load.
  Matrix features;
  std::vector<std::uint32_t> labels;
  std::uint32_t label_width = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

/// Throws DataError with kind bad_magic, version_mismatch, size_mismatch or
/// label_out_of_range.
FeatureDataset parse_features(std::span<const std::byte> bytes);
FeatureDataset load_features(const std::filesystem::path& path);

std::vector<std::byte> serialize_features(const FeatureDataset& ds);
void save_features(const std::filesystem::path& path, const FeatureDataset& ds);

LabeledSet to_labeled_set(const FeatureDataset& ds);
/// Labels must be non-negative and below `label_width`.
FeatureDataset from_labeled_set(const LabeledSet& set, std::uint32_t label_width);

}  // namespace zofc
