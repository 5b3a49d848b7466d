// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "zofc/kernels.hpp"
#include "zofc/numerics.hpp"
#include "zofc/rng.hpp"

namespace zofc {

enum class PerturbationLaw { rademacher, gaussian };

std::string_view to_string(PerturbationLaw law) noexcept;
PerturbationLaw perturbation_law_from_string(std::string_view s);

struct SpsaConfig {
  double epsilon = 1e-3;
  std::size_t queries = 4;
  /// L2 threshold applied to the query-averaged estimate; +inf disables it.
  double clip_threshold = 1.0;
  PerturbationLaw law = PerturbationLaw::rademacher;

  void validate() const;
  friend bool operator==(const SpsaConfig&, const SpsaConfig&) = default;
};

/// Everything needed to regenerate one perturbation direction, plus the
/// scalar finite difference it produced. The direction itself is never kept.
struct PerturbationRecord {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t query = 0;
  std::size_t dim = 0;
  double epsilon = 0.0;
  PerturbationLaw law = PerturbationLaw::rademacher;
  /// (L+ - L-) / (2 eps)
  double projected_grad = 0.0;

  friend bool operator==(const PerturbationRecord&, const PerturbationRecord&) = default;
};

Vector replay_direction(const PerturbationRecord& record, std::size_t dim);

/// Two-point estimate ((L(t + eps d) - L(t - eps d)) / (2 eps)) * d.
/// Multiplying by d equals multiplying by its elementwise inverse for +/-1
/// entries; for Gaussian directions the standard d-weighted form is used.
Vector spsa_estimate(const ScalarFunction& loss, std::span<const double> theta,
                     std::span<const double> delta, double eps);

struct ZoStepResult {
  std::vector<PerturbationRecord> records;
  /// Mean of the 2Q probe losses.
  double mean_loss = 0.0;
  double raw_norm = 0.0;
  bool clipped = false;
  /// The vector subtracted from the parameters: lr * clip(mean estimate).
  Vector update;
};

/// One ZO-SGD step: Q independent directions, 2Q loss evaluations, average,
/// clip, update. `params` is read-only until the final update, so a failing
/// evaluation leaves it untouched. Consumes one count of `stream`.
ZoStepResult zo_sgd_step(const ScalarFunction& loss, Vector& params, const SpsaConfig& cfg,
                         double lr, RngStream& stream, Exec exec = Exec::parallel);

/// Rebuilds the applied update lr * clip(mean_q g_q d_q) from records alone.
Vector reconstruct_update(std::span<const PerturbationRecord> records, std::size_t dim, double lr,
                          double clip_threshold);

Vector fo_sgd_step(std::span<const double> grad, std::span<const double> params, double lr);

enum class ScheduleKind { constant, cosine };

std::string_view to_string(ScheduleKind k) noexcept;
ScheduleKind schedule_kind_from_string(std::string_view s);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 0.01;
  std::size_t total_steps = 1;

  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

/// constant: base. cosine: base * (1 + cos(pi t / T)) / 2.
double lr_at(const LrSchedule& schedule, std::size_t t);

}  // namespace zofc
