// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zofc/numerics.hpp"

namespace zofc {

/// Lower-triangular accuracy matrix: at(i, j) is the accuracy (percent) on
/// task j after training through task i, defined for j <= i only.
class EvalMatrix {
 public:
  EvalMatrix() = default;
  explicit EvalMatrix(std::size_t tasks);

  std::size_t tasks() const noexcept { return rows_.size(); }
  void set(std::size_t i, std::size_t j, double accuracy);
  double at(std::size_t i, std::size_t j) const;
  bool complete() const noexcept;
  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }

  static EvalMatrix from_rows(const std::vector<std::vector<double>>& rows);

  friend bool operator==(const EvalMatrix&, const EvalMatrix&) = default;

 private:
  std::vector<std::vector<double>> rows_;
  std::vector<std::vector<char>> filled_;
};

/// Mean of the final row.
double avg_accuracy(const EvalMatrix& a);
/// A[K][K].
double last_accuracy(const EvalMatrix& a);
/// Mean over j < K of (max_{i >= j} A[i][j] - A[K][j]). Needs K >= 2.
double forgetting(const EvalMatrix& a);

struct MetricsReport {
  std::size_t tasks = 0;
  double avg = 0.0;
  double last = 0.0;
  /// Undefined (nullopt) for a single task.
  std::optional<double> fgt;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Metrics of the leading `tasks` x `tasks` block (i.e. after task `tasks`).
MetricsReport metrics_after(const EvalMatrix& a, std::size_t tasks);

// ---------------------------------------------------------------------------
// Flatness and curvature probes

enum class ProbeKind { ascent, random };

std::string_view to_string(ProbeKind k) noexcept;
ProbeKind probe_kind_from_string(std::string_view s);

struct ProbeSpec {
  ProbeKind kind = ProbeKind::ascent;
  /// Number of random unit directions averaged for ProbeKind::random.
  std::size_t directions = 8;
  std::uint64_t seed = 0;
  /// Finite-difference step for the ascent gradient when none is supplied.
  double fd_step = 1e-5;
};

inline constexpr double kFlatnessDenominatorEps = 1e-12;

struct FlatnessResult {
  double phi = 0.0;
  double loss = 0.0;
  /// Mean perturbed loss over the probe directions.
  double loss_plus = 0.0;
  std::string descriptor;
};

/// (L(theta + rho u) - L(theta)) / (rho (L(theta) + 1e-12)) for a unit
/// probe direction u. Ascent probes use u = g / |g|, with g the supplied
/// gradient or a central-difference estimate; random probes average phi over
/// `directions` normalized Gaussian directions.
FlatnessResult sam_flatness(const ScalarFunction& loss, std::span<const double> theta, double rho,
                            const ProbeSpec& probe,
                            std::optional<std::span<const double>> gradient = std::nullopt);

/// Sum of central second differences along every axis.
double hessian_trace(const ScalarFunction& loss, std::span<const double> theta, double h);

struct PowerIterationOptions {
  std::size_t max_iterations = 500;
  double tolerance = 1e-10;
  std::uint64_t seed = 0x5eed;
};

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

using MatVec = std::function<Vector(std::span<const double>)>;

/// Largest-magnitude eigenvalue of a symmetric operator (Rayleigh quotient).
EigenEstimate power_iteration(const MatVec& apply, std::size_t dim,
                              const PowerIterationOptions& opts = {});

/// Hessian-vector product from four loss evaluations per coordinate.
Vector finite_difference_hvp(const ScalarFunction& loss, std::span<const double> theta,
                             std::span<const double> v, double h);

/// |lambda|_max of the Hessian at theta via power iteration on
/// finite-difference Hessian-vector products.
EigenEstimate lambda_max(const ScalarFunction& loss, std::span<const double> theta, double h,
                         const PowerIterationOptions& opts = {});

/// L(theta) = 1/2 (theta - center)^T H (theta - center) + offset.
struct QuadraticLoss {
  Matrix hessian;
  Vector center;
  double offset = 0.0;

  double operator()(std::span<const double> theta) const;
  Vector gradient(std::span<const double> theta) const;
};

struct ForgettingBound {
  /// L(theta_t + dtheta) - L(theta_t)
  double forgetting = 0.0;
  /// 1/2 lambda_max |dtheta|^2
  double bound = 0.0;
  double lambda_max = 0.0;
  bool satisfied = false;
};

ForgettingBound forgetting_bound_check(const QuadraticLoss& old_loss,
                                       std::span<const double> theta_t,
                                       std::span<const double> delta);

}  // namespace zofc
