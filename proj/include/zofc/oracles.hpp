// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zofc/continual.hpp"
#include "zofc/kernels.hpp"
#include "zofc/numerics.hpp"
#include "zofc/optim.hpp"

namespace zofc {

// ---------------------------------------------------------------------------
// Smoothed loss E[L(theta + eps d)]

enum class SmoothingMode { enumerate, monte_carlo };

struct SmoothedValue {
  double value = 0.0;
  /// Zero for enumeration.
  double std_error = 0.0;
  std::size_t samples = 0;
};

inline constexpr std::size_t kMaxEnumerationDim = 20;

/// Exact expectation over all 2^d sign vectors (Rademacher only, d <= 20),
/// or a Monte Carlo mean over `samples` draws with its standard error.
SmoothedValue smoothed_loss(const ScalarFunction& loss, std::span<const double> theta, double eps,
                            PerturbationLaw law, SmoothingMode mode, std::size_t samples = 0,
                            std::uint64_t seed = 0, Exec exec = Exec::serial);

// ---------------------------------------------------------------------------
// Two-well landscape and basin selection

/// L = A - A exp(-|t - c1|^2 / (2 s1^2)) - A exp(-|t - c2|^2 / (2 s2^2)),
/// with s1 < s2: well 1 is the sharp one.
struct TwoWellLandscape {
  Vector sharp_center;
  Vector flat_center;
  double sharp_width = 0.25;
  double flat_width = 1.0;
  double depth = 1.0;

  void validate() const;
  double operator()(std::span<const double> theta) const;
  Vector gradient(std::span<const double> theta) const;
  /// 2 * max(sharp_width, flat_width)
  double classification_radius() const noexcept;
};

enum class Basin { sharp, flat, neither };
std::string_view to_string(Basin b) noexcept;

struct TrialOptimizer {
  enum class Kind { fo, zo };
  Kind kind = Kind::fo;
  /// Used by Kind::zo only.
  SpsaConfig spsa;
};

struct FlatMinimaTrialSpec {
  TwoWellLandscape landscape;
  /// Inits are init_center + init_spread * N(0, I).
  Vector init_center;
  double init_spread = 0.0;
  std::size_t steps = 0;
  double lr = 0.01;
  double divergence_bound = 1e6;
};

Basin classify_basin(const TwoWellLandscape& landscape, std::span<const double> theta);
Basin flat_minima_trial(const FlatMinimaTrialSpec& spec, const TrialOptimizer& optimizer,
                        std::uint64_t seed);

struct BasinCounts {
  std::size_t sharp = 0;
  std::size_t flat = 0;
  std::size_t neither = 0;

  std::size_t total() const noexcept { return sharp + flat + neither; }
  double flat_rate() const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(flat) / static_cast<double>(total());
  }
};

/// Trial t uses seed mix(base_seed, t); both optimizers therefore share inits.
BasinCounts flat_minima_trials(const FlatMinimaTrialSpec& spec, const TrialOptimizer& optimizer,
                               std::size_t trials, std::uint64_t base_seed,
                               Exec exec = Exec::parallel);

/// One-sided Fisher exact p-value for H1: rate(a) > rate(b).
double fisher_exact_greater(std::size_t a_success, std::size_t a_total, std::size_t b_success,
                            std::size_t b_total);

// ---------------------------------------------------------------------------
// Analytical cost model

enum class FlopsRegime { fo, zo, zofc_early, zofc_late };

std::string_view to_string(FlopsRegime r) noexcept;
FlopsRegime flops_regime_from_string(std::string_view s);

struct FlopsModel {
  std::size_t batch = 48;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t dim = 768;
  std::size_t classes = 5;
  std::size_t adapter_blocks = 5;
  std::size_t rank = 5;
  std::size_t queries = 4;
  double alpha_fc = 2.0;
  /// Measured single-forward cost of one batch; taken as an input constant.
  double forward_per_batch = 8.484e11;
  /// Count the separate evaluation forward of the early hybrid regime
  /// (2q+2 forwards). Off by default, matching the tabulated 2q+1.
  bool count_eval_forward = false;
  FlopsRegime regime = FlopsRegime::fo;

  /// 1 + (H/16)(W/16)
  std::size_t tokens() const noexcept { return 1 + (height / 16) * (width / 16); }
  void validate() const;
};

struct CostReport {
  FlopsRegime regime = FlopsRegime::fo;
  std::size_t queries = 0;
  std::size_t tokens = 0;
  /// L_a N (4 D r)
  double adapter_flops_per_image = 0.0;
  /// 5 C D + 3 D + C
  double head_flops_per_image = 0.0;
  std::size_t forwards_per_batch = 0;
  double forward_flops = 0.0;
  double backward_flops = 0.0;
  double total_flops = 0.0;
  /// total / FO total
  double ratio_vs_fo = 0.0;

  friend bool operator==(const CostReport&, const CostReport&) = default;
};

CostReport flops_estimate(const FlopsModel& model);

/// Shapes used by the stored-activation proxy.
struct ActivationDims {
  std::vector<std::size_t> backbone_widths;
  std::size_t dim = 0;
  std::size_t rank = 0;

  friend bool operator==(const ActivationDims&, const ActivationDims&) = default;
};

/// Scalars that must be kept for a backward pass: FO adapters keep every
/// backbone and adapter intermediate, an FO head keeps only its input
/// features, and purely gradient-free training keeps nothing.
std::uint64_t activation_memory_proxy(const MethodVariant& variant, const ActivationDims& dims,
                                      std::size_t batch);

// ---------------------------------------------------------------------------
// Two-time-scale check on a problem with a closed-form fast optimum

/// Ridge regression on features scaled by (1 + phi): the head psi has a
/// closed-form optimum psi*(phi) for every adapter state phi.
struct HybridProblem {
  Matrix features;
  Vector targets;
  double ridge = 1e-2;

  double loss(std::span<const double> phi, std::span<const double> psi) const;
  Vector head_gradient(std::span<const double> phi, std::span<const double> psi) const;
  Vector optimal_head(std::span<const double> phi) const;
};

HybridProblem make_hybrid_problem(std::size_t examples, std::size_t dim, std::uint64_t seed);

struct HybridDynamicsSpec {
  HybridProblem problem;
  double fast_lr = 0.1;
  double slow_lr = 1e-3;
  std::size_t steps = 2000;
  std::size_t burn_in = 200;
  SpsaConfig spsa;
  std::uint64_t seed = 0;
};

struct HybridDynamicsReport {
  /// |psi_t - psi*(phi_t)| per step
  std::vector<double> tracking_error;
  /// |phi_t - phi_{t-1}| per step
  std::vector<double> adapter_motion;
  double mean_tracking_error = 0.0;
  double mean_adapter_motion = 0.0;
  /// mean tracking error / mean adapter motion after burn-in (0 if no motion)
  double tracking_ratio = 0.0;
  bool diverged = false;
  Vector final_phi;
  Vector final_psi;
};

HybridDynamicsReport hybrid_dynamics_check(const HybridDynamicsSpec& spec);

}  // namespace zofc
