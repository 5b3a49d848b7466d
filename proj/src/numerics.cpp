// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/numerics.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace zofc {

void require_same_size(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  }
}

Vector& Vector::operator+=(const Vector& other) {
  require_same_size(size(), other.size(), "Vector::operator+=");
  for (std::size_t i = 0; i < size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& other) {
  require_same_size(size(), other.size(), "Vector::operator-=");
  for (std::size_t i = 0; i < size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Vector& Vector::operator*=(double s) noexcept {
  for (double& x : data_) x *= s;
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector v) { return v *= s; }

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) {
  // scaled accumulation avoids overflow for large entries
  double scale = 0.0;
  double ssq = 1.0;
  for (double x : v) {
    if (x == 0.0) continue;
    const double ax = std::fabs(x);
    if (scale < ax) {
      ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
      scale = ax;
    } else {
      ssq += (ax / scale) * (ax / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  require_same_size(data_.size(), rows * cols, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require_same_size(values.size(), cols_, "Matrix::append_row");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  require_same_size(m.cols(), x.size(), "matvec");
  Vector y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  require_same_size(m.rows(), x.size(), "matvec_transposed");
  Vector y(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(x[r], m.row(r), y.span());
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_same_size(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) axpy(a(i, k), b.row(k), c.row(i));
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

Vector solve_spd(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  require_same_size(a.cols(), n, "solve_spd (square)");
  require_same_size(b.size(), n, "solve_spd");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("solve_spd: matrix is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

bool all_finite(std::span<const double> v) noexcept {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(std::span<const double> v, std::string_view what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

void check_finite(double x, std::string_view what) {
  if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

Vector l2_clip(const Vector& v, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("l2_clip: threshold must be positive");
  check_finite(v, "l2_clip");
  const double n = norm2(v);
  // A few ulps of slack keep clip(clip(v)) == clip(v) bitwise.
  if (n <= threshold * (1.0 + 8.0 * std::numeric_limits<double>::epsilon())) return v;
  Vector out = v;
  for (double& x : out) x = x * threshold / n;
  return out;
}

double central_second_difference(const ScalarFunction& f, std::span<const double> x,
                                 std::size_t axis, double h) {
  if (!(h > 0.0)) throw ConfigError("central_second_difference: step must be positive");
  if (axis >= x.size()) throw DimensionError("central_second_difference: axis out of range");
  Vector probe(x);
  const double f0 = f(probe);
  probe[axis] = x[axis] + h;
  const double fp = f(probe);
  probe[axis] = x[axis] - h;
  const double fm = f(probe);
  check_finite(f0, "central_second_difference f(x)");
  check_finite(fp, "central_second_difference f(x+h)");
  check_finite(fm, "central_second_difference f(x-h)");
  return (fp - 2.0 * f0 + fm) / (h * h);
}

Vector central_gradient(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("central_gradient: step must be positive");
  Vector probe(x);
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    check_finite(fp, "central_gradient");
    check_finite(fm, "central_gradient");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace zofc
