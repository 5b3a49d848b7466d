// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/rng.hpp"

#include <cmath>
#include <numbers>

namespace zofc {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * kTwoPow53Inv;
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(std::string name, std::uint64_t seed, std::uint64_t counter)
    : name_(std::move(name)),
      seed_(seed),
      counter_(counter),
      key_(mix64(hash_name(name_) ^ mix64(seed + kGolden))) {}

std::uint64_t RngStream::draw_bits(std::uint64_t lane) const noexcept {
  std::uint64_t x = key_ + (counter_ + 1) * kGolden;
  if (lane != 0) x ^= mix64(lane * 0xD1B54A32D192ED03ULL);
  return mix64(x);
}

std::uint64_t RngStream::next_u64() noexcept {
  const std::uint64_t bits = draw_bits(0);
  ++counter_;
  return bits;
}

double RngStream::next_uniform() noexcept { return to_open_unit(next_u64()); }

double RngStream::next_gaussian() noexcept {
  // Box-Muller from two lanes of the same counter value.
  const double u1 = to_open_unit(draw_bits(0));
  const double u2 = to_open_unit(draw_bits(1));
  ++counter_;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::next_sign() noexcept { return (next_u64() >> 63) != 0 ? 1.0 : -1.0; }

std::uint64_t RngStream::next_below(std::uint64_t n) noexcept {
  if (n <= 1) {
    ++counter_;
    return 0;
  }
  const auto k = static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

RngStream RngStream::derive(std::string_view child, std::uint64_t salt) const {
  std::string name = name_;
  name += '/';
  name += child;
  return RngStream(std::move(name), mix64(seed_ ^ mix64(salt + 0x632BE59BD9B4E019ULL)));
}

Vector rademacher(std::size_t dim, RngStream& stream) {
  if (dim == 0) throw DimensionError("rademacher: dim must be >= 1");
  Vector v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = stream.next_sign();
  return v;
}

Vector gaussian(std::size_t dim, RngStream& stream) {
  if (dim == 0) throw DimensionError("gaussian: dim must be >= 1");
  Vector v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = stream.next_gaussian();
  return v;
}

}  // namespace zofc
