// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace zofc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes or an empty dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached a place that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or component configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class DataErrorKind {
  io,
  bad_magic,
  version_mismatch,
  size_mismatch,
  label_out_of_range,
  inconsistent,
};

/// Malformed or inconsistent input data. `kind()` distinguishes the cause.
class DataError : public Error {
 public:
  DataError(DataErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

}  // namespace zofc
