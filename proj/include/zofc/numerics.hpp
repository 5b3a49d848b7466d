// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zofc/error.hpp"

namespace zofc {

/// Dense vector of doubles. Every binary operation checks sizes and throws
/// DimensionError on mismatch; nothing broadcasts.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  operator std::span<const double>() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  const std::vector<double>& values() const noexcept { return data_; }
  void resize(std::size_t n, double fill = 0.0) { data_.resize(n, fill); }

  Vector& operator+=(const Vector& other);
  Vector& operator-=(const Vector& other);
  Vector& operator*=(double s) noexcept;

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat() noexcept { return data_; }

  /// Appends one row; the first append on an empty 0x0 matrix fixes cols.
  void append_row(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y = M x
Vector matvec(const Matrix& m, std::span<const double> x);
/// y = M^T x
Vector matvec_transposed(const Matrix& m, std::span<const double> x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

/// Solves A x = b for symmetric positive definite A (Cholesky).
Vector solve_spd(const Matrix& a, std::span<const double> b);

void require_same_size(std::size_t a, std::size_t b, std::string_view what);

bool all_finite(std::span<const double> v) noexcept;
/// Throws NumericError naming `what` and the first offending index.
void check_finite(std::span<const double> v, std::string_view what);
void check_finite(double x, std::string_view what);

/// Returns v unchanged when ||v||_2 <= threshold, otherwise v rescaled onto
/// the threshold sphere. An infinite threshold disables clipping.
Vector l2_clip(const Vector& v, double threshold);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// (f(x + h e_axis) - 2 f(x) + f(x - h e_axis)) / h^2
double central_second_difference(const ScalarFunction& f, std::span<const double> x,
                                 std::size_t axis, double h);

/// Central-difference gradient, 2 d evaluations.
Vector central_gradient(const ScalarFunction& f, std::span<const double> x, double h);

}  // namespace zofc
