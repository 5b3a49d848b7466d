// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "zofc/numerics.hpp"

namespace zofc {

std::uint64_t mix64(std::uint64_t x) noexcept;
/// FNV-1a, 64 bit.
std::uint64_t hash_name(std::string_view name) noexcept;

/// Counter-based random stream. Draw number `c` of a stream is a pure
/// function of (name, seed, c), so any draw can be regenerated later from
/// those three values alone; nothing depends on hidden generator state or on
/// the standard library's distribution implementations.
class RngStream {
 public:
  RngStream(std::string name, std::uint64_t seed, std::uint64_t counter = 0);

  const std::string& name() const noexcept { return name_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in the open interval (0, 1).
  double next_uniform() noexcept;
  /// Standard normal; consumes exactly one draw.
  double next_gaussian() noexcept;
  /// +1 or -1 with equal probability.
  double next_sign() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) noexcept;

  void skip(std::uint64_t draws) noexcept { counter_ += draws; }

  /// Independent stream named `<name>/<child>` whose seed mixes in `salt`.
  RngStream derive(std::string_view child, std::uint64_t salt = 0) const;

  friend bool operator==(const RngStream& a, const RngStream& b) noexcept {
    return a.name_ == b.name_ && a.seed_ == b.seed_ && a.counter_ == b.counter_;
  }

 private:
  std::uint64_t draw_bits(std::uint64_t lane) const noexcept;

  std::string name_;
  std::uint64_t seed_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

/// dim independent +/-1 entries; advances the stream by dim draws.
Vector rademacher(std::size_t dim, RngStream& stream);
/// dim independent N(0,1) entries; advances the stream by dim draws.
Vector gaussian(std::size_t dim, RngStream& stream);

}  // namespace zofc
