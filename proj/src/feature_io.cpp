// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/feature_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "zofc/error.hpp"

namespace zofc {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T read_le(std::span<const std::byte> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(raw.begin(), raw.end());
    v = std::bit_cast<T>(raw);
  }
  return v;
}

template <typename T>
void write_le(std::vector<std::byte>& out, T v) {
  auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

}  // namespace

FeatureDataset parse_features(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ZOFC", 4) != 0) {
    throw DataError(DataErrorKind::bad_magic, "feature file: missing \"ZOFC\" magic");
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    throw DataError(DataErrorKind::size_mismatch,
                    "feature file: truncated header, expected " +
                        std::to_string(kFeatureHeaderBytes) + " bytes, got " +
                        std::to_string(bytes.size()));
  }
  const auto version = read_le<std::uint32_t>(bytes, 4);
  if (version != kFeatureFormatVersion) {
    throw DataError(DataErrorKind::version_mismatch,
                    "feature file: format version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kFeatureFormatVersion) +
                        ")");
  }
  const auto count = read_le<std::uint64_t>(bytes, 8);
  const auto dim = read_le<std::uint32_t>(bytes, 16);
  const auto width = read_le<std::uint32_t>(bytes, 20);
  if (dim == 0) throw DataError(DataErrorKind::inconsistent, "feature file: feature dim is 0");
  if (width == 0) throw DataError(DataErrorKind::inconsistent, "feature file: label width is 0");

  // 4 bytes of features per (row, col) plus one 4-byte label per row; guard
  // the multiplication against absurd headers.
  const std::uint64_t per_row = 4ULL * dim + 4ULL;
  const std::uint64_t body = bytes.size() - kFeatureHeaderBytes;
  if (count > body / per_row + 1 || count * per_row != body) {
    const bool overflow = count > (~0ULL - kFeatureHeaderBytes) / per_row;
    const std::string expected =
        overflow ? std::string("more than 2^64")
                 : std::to_string(kFeatureHeaderBytes + count * per_row);
    throw DataError(DataErrorKind::size_mismatch,
                    "feature file: " + std::to_string(count) + " x " + std::to_string(dim) +
                        " needs " + expected + " bytes, file has " +
                        std::to_string(bytes.size()));
  }

  FeatureDataset ds;
  ds.label_width = width;
  ds.features = Matrix(count, dim);
  auto flat = ds.features.flat();
  std::size_t off = kFeatureHeaderBytes;
  for (std::size_t k = 0; k < flat.size(); ++k, off += 4) {
    const float f = read_le<float>(bytes, off);
    if (!std::isfinite(f)) {
      throw DataError(DataErrorKind::inconsistent,
                      "feature file: non-finite feature at row " + std::to_string(k / dim) +
                          ", column " + std::to_string(k % dim));
    }
    flat[k] = f;
  }
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i, off += 4) {
    const auto label = read_le<std::uint32_t>(bytes, off);
    if (label >= width) {
      throw DataError(DataErrorKind::label_out_of_range,
                      "feature file: label " + std::to_string(label) + " at row " +
                          std::to_string(i) + " is not below label width " +
                          std::to_string(width));
    }
    ds.labels[i] = label;
  }
  return ds;
}

FeatureDataset load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open feature file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError(DataErrorKind::io, "error reading feature file " + path.string());
  try {
    return parse_features(std::as_bytes(std::span<const char>(raw)));
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::byte> serialize_features(const FeatureDataset& ds) {
  require_same_size(ds.features.rows(), ds.labels.size(), "serialize_features");
  if (ds.features.cols() == 0) throw DimensionError("serialize_features: feature dim is 0");
  std::vector<std::byte> out;
  out.reserve(kFeatureHeaderBytes + ds.size() * (4 * ds.dim() + 4));
  for (char c : std::string_view("ZOFC")) out.push_back(static_cast<std::byte>(c));
  write_le<std::uint32_t>(out, kFeatureFormatVersion);
  write_le<std::uint64_t>(out, ds.size());
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  write_le<std::uint32_t>(out, ds.label_width);
  for (double v : ds.features.flat()) write_le<float>(out, static_cast<float>(v));
  for (std::uint32_t l : ds.labels) {
    if (l >= ds.label_width) {
      throw DataError(DataErrorKind::label_out_of_range,
                      "serialize_features: label " + std::to_string(l) + " >= label width");
    }
    write_le<std::uint32_t>(out, l);
  }
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureDataset& ds) {
  const auto bytes = serialize_features(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::io, "cannot write feature file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorKind::io, "error writing feature file " + path.string());
}

LabeledSet to_labeled_set(const FeatureDataset& ds) {
  LabeledSet s;
  s.x = ds.features;
  s.y.reserve(ds.size());
  for (std::uint32_t l : ds.labels) s.y.push_back(static_cast<int>(l));
  return s;
}

FeatureDataset from_labeled_set(const LabeledSet& set, std::uint32_t label_width) {
  FeatureDataset ds;
  ds.features = set.x;
  ds.label_width = label_width;
  ds.labels.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int y = set.y[i];
    if (y < 0 || static_cast<std::uint32_t>(y) >= label_width) {
      throw DataError(DataErrorKind::label_out_of_range,
                      "from_labeled_set: label " + std::to_string(y) + " at row " +
                          std::to_string(i) + " outside [0, " + std::to_string(label_width) + ")");
    }
    ds.labels.push_back(static_cast<std::uint32_t>(y));
  }
  return ds;
}

}  // namespace zofc
