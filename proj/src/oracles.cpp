// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zofc/rng.hpp"

namespace zofc {

// ---------------------------------------------------------------------------
// Smoothed loss

SmoothedValue smoothed_loss(const ScalarFunction& loss, std::span<const double> theta, double eps,
                            PerturbationLaw law, SmoothingMode mode, std::size_t samples,
                            std::uint64_t seed, Exec exec) {
  if (!(eps >= 0.0)) throw ConfigError("smoothed_loss: eps must be >= 0");
  const std::size_t d = theta.size();
  if (d == 0) throw DimensionError("smoothed_loss: empty parameter vector");

  if (mode == SmoothingMode::enumerate) {
    if (law != PerturbationLaw::rademacher) {
      throw ConfigError("smoothed_loss: enumeration requires the Rademacher law");
    }
    if (d > kMaxEnumerationDim) {
      throw ConfigError("smoothed_loss: enumeration limited to d <= " +
                        std::to_string(kMaxEnumerationDim) + ", got " + std::to_string(d));
    }
    const std::size_t n = std::size_t{1} << d;
    constexpr std::size_t kChunk = 4096;
    std::vector<double> values(n);
    parallel_for(
        (n + kChunk - 1) / kChunk,
        [&](std::size_t c) {
          Vector point(d);
          for (std::size_t idx = c * kChunk; idx < std::min(n, (c + 1) * kChunk); ++idx) {
            for (std::size_t i = 0; i < d; ++i) {
              point[i] = theta[i] + (((idx >> i) & 1U) != 0 ? eps : -eps);
            }
            values[idx] = loss(point);
          }
        },
        exec);
    double sum = 0.0;
    for (double v : values) sum += v;
    check_finite(sum, "smoothed_loss");
    return {sum / static_cast<double>(n), 0.0, n};
  }

  if (samples < 2) throw ConfigError("smoothed_loss: Monte Carlo needs at least 2 samples");
  std::vector<double> values(samples);
  constexpr std::size_t kChunk = 1024;
  parallel_for(
      (samples + kChunk - 1) / kChunk,
      [&](std::size_t c) {
        Vector point(d);
        for (std::size_t s = c * kChunk; s < std::min(samples, (c + 1) * kChunk); ++s) {
          // Sample s owns counters [s d, (s + 1) d).
          RngStream stream("smoothing", seed, s * d);
          for (std::size_t i = 0; i < d; ++i) {
            const double z =
                law == PerturbationLaw::rademacher ? stream.next_sign() : stream.next_gaussian();
            point[i] = theta[i] + eps * z;
          }
          values[s] = loss(point);
        }
      },
      exec);
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(samples);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(samples - 1);
  check_finite(mean, "smoothed_loss");
  return {mean, std::sqrt(var / static_cast<double>(samples)), samples};
}

// ---------------------------------------------------------------------------
// Two wells

void TwoWellLandscape::validate() const {
  require_same_size(sharp_center.size(), flat_center.size(), "TwoWellLandscape centers");
  if (sharp_center.empty()) throw DimensionError("TwoWellLandscape: empty centers");
  if (!(sharp_width > 0.0) || !(flat_width > 0.0) || !(depth > 0.0)) {
    throw ConfigError("TwoWellLandscape: widths and depth must be positive");
  }
  if (!(sharp_width < flat_width)) {
    throw ConfigError("TwoWellLandscape: the sharp well must be narrower than the flat one");
  }
}

namespace {
double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}
}  // namespace

double TwoWellLandscape::operator()(std::span<const double> theta) const {
  require_same_size(theta.size(), sharp_center.size(), "TwoWellLandscape");
  const double g1 = std::exp(-sq_dist(theta, sharp_center) / (2.0 * sharp_width * sharp_width));
  const double g2 = std::exp(-sq_dist(theta, flat_center) / (2.0 * flat_width * flat_width));
  return depth - depth * g1 - depth * g2;
}

Vector TwoWellLandscape::gradient(std::span<const double> theta) const {
  require_same_size(theta.size(), sharp_center.size(), "TwoWellLandscape::gradient");
  const double s1 = sharp_width * sharp_width;
  const double s2 = flat_width * flat_width;
  const double g1 = depth * std::exp(-sq_dist(theta, sharp_center) / (2.0 * s1)) / s1;
  const double g2 = depth * std::exp(-sq_dist(theta, flat_center) / (2.0 * s2)) / s2;
  Vector g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    g[i] = g1 * (theta[i] - sharp_center[i]) + g2 * (theta[i] - flat_center[i]);
  }
  return g;
}

double TwoWellLandscape::classification_radius() const noexcept {
  return 2.0 * std::max(sharp_width, flat_width);
}

std::string_view to_string(Basin b) noexcept {
  switch (b) {
    case Basin::sharp: return "sharp";
    case Basin::flat: return "flat";
    case Basin::neither: return "neither";
  }
  return "?";
}

Basin classify_basin(const TwoWellLandscape& landscape, std::span<const double> theta) {
  if (!all_finite(theta)) return Basin::neither;
  const double ds = std::sqrt(sq_dist(theta, landscape.sharp_center));
  const double df = std::sqrt(sq_dist(theta, landscape.flat_center));
  const double radius = landscape.classification_radius();
  if (std::min(ds, df) > radius) return Basin::neither;
  return ds < df ? Basin::sharp : Basin::flat;
}

Basin flat_minima_trial(const FlatMinimaTrialSpec& spec, const TrialOptimizer& optimizer,
                        std::uint64_t seed) {
  spec.landscape.validate();
  require_same_size(spec.init_center.size(), spec.landscape.sharp_center.size(),
                    "flat_minima_trial init");
  RngStream init("trial-init", seed);
  Vector theta = spec.init_center;
  if (spec.init_spread > 0.0) {
    Vector z = gaussian(theta.size(), init);
    axpy(spec.init_spread, z.span(), theta.span());
  }
  RngStream zo("trial-zo", seed);
  const auto loss = [&](std::span<const double> t) { return spec.landscape(t); };
  for (std::size_t s = 0; s < spec.steps; ++s) {
    if (optimizer.kind == TrialOptimizer::Kind::fo) {
      const Vector g = spec.landscape.gradient(theta);
      axpy(-spec.lr, g.span(), theta.span());
    } else {
      zo_sgd_step(loss, theta, optimizer.spsa, spec.lr, zo, Exec::serial);
    }
    if (!all_finite(theta) || norm2(theta) > spec.divergence_bound) return Basin::neither;
  }
  return classify_basin(spec.landscape, theta);
}

BasinCounts flat_minima_trials(const FlatMinimaTrialSpec& spec, const TrialOptimizer& optimizer,
                               std::size_t trials, std::uint64_t base_seed, Exec exec) {
  std::vector<Basin> out(trials);
  parallel_for(
      trials,
      [&](std::size_t t) {
        out[t] = flat_minima_trial(spec, optimizer, mix64(base_seed ^ mix64(t + 1)));
      },
      exec);
  BasinCounts c;
  for (Basin b : out) {
    if (b == Basin::sharp) ++c.sharp;
    else if (b == Basin::flat) ++c.flat;
    else ++c.neither;
  }
  return c;
}

double fisher_exact_greater(std::size_t a_success, std::size_t a_total, std::size_t b_success,
                            std::size_t b_total) {
  if (a_success > a_total || b_success > b_total) {
    throw ConfigError("fisher_exact_greater: successes exceed totals");
  }
  const auto lchoose = [](double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  };
  const double n = static_cast<double>(a_total + b_total);
  const double k = static_cast<double>(a_success + b_success);
  const double na = static_cast<double>(a_total);
  const double denom = lchoose(n, na);
  const std::size_t hi = std::min(a_success + b_success, a_total);
  double p = 0.0;
  for (std::size_t x = a_success; x <= hi; ++x) {
    const double xd = static_cast<double>(x);
    if (na - xd > n - k) continue;
    p += std::exp(lchoose(k, xd) + lchoose(n - k, na - xd) - denom);
  }
  return std::min(1.0, p);
}

// ---------------------------------------------------------------------------
// Cost model

std::string_view to_string(FlopsRegime r) noexcept {
  switch (r) {
    case FlopsRegime::fo: return "fo";
    case FlopsRegime::zo: return "zo";
    case FlopsRegime::zofc_early: return "zofc-early";
    case FlopsRegime::zofc_late: return "zofc-late";
  }
  return "?";
}

FlopsRegime flops_regime_from_string(std::string_view s) {
  if (s == "fo" || s == "FO") return FlopsRegime::fo;
  if (s == "zo" || s == "ZO") return FlopsRegime::zo;
  if (s == "zofc-early") return FlopsRegime::zofc_early;
  if (s == "zofc-late") return FlopsRegime::zofc_late;
  throw ConfigError("unknown regime '" + std::string(s) +
                    "' (expected fo, zo, zofc-early or zofc-late)");
}

void FlopsModel::validate() const {
  if (batch == 0 || height < 16 || width < 16 || dim == 0 || classes == 0 || adapter_blocks == 0 ||
      rank == 0) {
    throw ConfigError("flops model: all counts must be positive and H, W >= 16");
  }
  if (regime != FlopsRegime::fo && queries == 0) throw ConfigError("flops model: q must be >= 1");
  if (!(alpha_fc > 0.0) || !(forward_per_batch > 0.0)) {
    throw ConfigError("flops model: alpha_fc and forward cost must be positive");
  }
}

CostReport flops_estimate(const FlopsModel& m) {
  m.validate();
  const double d = static_cast<double>(m.dim);
  const double c = static_cast<double>(m.classes);
  const double b = static_cast<double>(m.batch);
  CostReport r;
  r.regime = m.regime;
  r.queries = m.regime == FlopsRegime::fo ? 0 : m.queries;
  r.tokens = m.tokens();
  r.adapter_flops_per_image = static_cast<double>(m.adapter_blocks) *
                              static_cast<double>(r.tokens) * 4.0 * d *
                              static_cast<double>(m.rank);
  r.head_flops_per_image = 5.0 * c * d + 3.0 * d + c;
  const std::size_t zo_forwards = 2 * m.queries + 1;
  switch (m.regime) {
    case FlopsRegime::fo:
      r.forwards_per_batch = 1;
      r.backward_flops = 2.0 * m.forward_per_batch;
      break;
    case FlopsRegime::zo:
    case FlopsRegime::zofc_late:
      r.forwards_per_batch = zo_forwards;
      r.backward_flops = 0.0;
      break;
    case FlopsRegime::zofc_early:
      r.forwards_per_batch = m.count_eval_forward ? zo_forwards + 1 : zo_forwards;
      r.backward_flops = m.alpha_fc * b * r.head_flops_per_image;
      break;
  }
  r.forward_flops = static_cast<double>(r.forwards_per_batch) * m.forward_per_batch;
  r.total_flops = r.forward_flops + r.backward_flops;
  r.ratio_vs_fo = r.total_flops / (3.0 * m.forward_per_batch);
  return r;
}

std::uint64_t activation_memory_proxy(const MethodVariant& variant, const ActivationDims& dims,
                                      std::size_t batch) {
  variant.validate();
  const std::uint64_t bsz = batch;
  if (variant.adapter == ComponentOptimizer::fo) {
    std::uint64_t widths = dims.dim + dims.rank;
    for (std::size_t w : dims.backbone_widths) widths += w;
    return bsz * widths;
  }
  // A ZO-trained adapter with a prototype classifier still trains through a
  // temporary FO head.
  const bool fo_head = variant.head == ComponentOptimizer::fo ||
                       (variant.adapter_with_prototypes() && variant.adapter == ComponentOptimizer::zo);
  return fo_head ? bsz * dims.dim : 0;
}

// ---------------------------------------------------------------------------
// Two-time-scale check

namespace {
Matrix scaled_features(const Matrix& x, std::span<const double> phi) {
  require_same_size(phi.size(), x.cols(), "HybridProblem phi");
  Matrix z = x;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] *= 1.0 + phi[j];
  }
  return z;
}
}  // namespace

double HybridProblem::loss(std::span<const double> phi, std::span<const double> psi) const {
  const Matrix z = scaled_features(features, phi);
  const Vector pred = matvec(z, psi);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - targets[i]) * (pred[i] - targets[i]);
  const double n = static_cast<double>(pred.size());
  const double pn = norm2(psi);
  return 0.5 * s / n + 0.5 * ridge * pn * pn;
}

Vector HybridProblem::head_gradient(std::span<const double> phi, std::span<const double> psi) const {
  const Matrix z = scaled_features(features, phi);
  Vector resid = matvec(z, psi);
  resid -= targets;
  Vector g = matvec_transposed(z, resid);
  g *= 1.0 / static_cast<double>(targets.size());
  axpy(ridge, psi, g.span());
  return g;
}

Vector HybridProblem::optimal_head(std::span<const double> phi) const {
  const Matrix z = scaled_features(features, phi);
  const double n = static_cast<double>(targets.size());
  Matrix gram = matmul(transpose(z), z);
  for (double& v : gram.flat()) v /= n;
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += ridge;
  Vector rhs = matvec_transposed(z, targets);
  rhs *= 1.0 / n;
  return solve_spd(gram, rhs);
}

HybridProblem make_hybrid_problem(std::size_t examples, std::size_t dim, std::uint64_t seed) {
  if (examples == 0 || dim == 0) throw ConfigError("make_hybrid_problem: counts must be >= 1");
  RngStream s("hybrid-problem", seed);
  HybridProblem p;
  p.features = Matrix(examples, dim);
  for (double& v : p.features.flat()) v = s.next_gaussian();
  const Vector w = gaussian(dim, s);
  p.targets = Vector(examples);
  for (std::size_t i = 0; i < examples; ++i) {
    // Mildly non-linear target so the feature scaling has something to fit.
    const double lin = dot(p.features.row(i), w);
    p.targets[i] = lin + 0.5 * std::tanh(lin) + 0.1 * s.next_gaussian();
  }
  return p;
}

HybridDynamicsReport hybrid_dynamics_check(const HybridDynamicsSpec& spec) {
  const std::size_t d = spec.problem.features.cols();
  HybridDynamicsReport rep;
  Vector phi(d), psi(d);
  RngStream zo("hybrid-zo", spec.seed);
  double err_sum = 0.0, motion_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < spec.steps; ++t) {
    const Vector g = spec.problem.head_gradient(phi, psi);
    axpy(-spec.fast_lr, g.span(), psi.span());
    const Vector before = phi;
    if (spec.slow_lr > 0.0) {
      const auto loss = [&](std::span<const double> p) { return spec.problem.loss(p, psi); };
      zo_sgd_step(loss, phi, spec.spsa, spec.slow_lr, zo, Exec::serial);
    }
    if (!all_finite(psi) || !all_finite(phi) || norm2(psi) > 1e8 || norm2(phi) > 1e8) {
      rep.diverged = true;
      break;
    }
    const Vector star = spec.problem.optimal_head(phi);
    Vector diff = psi;
    diff -= star;
    const double err = norm2(diff);
    Vector step = phi;
    step -= before;
    const double motion = norm2(step);
    rep.tracking_error.push_back(err);
    rep.adapter_motion.push_back(motion);
    if (t >= spec.burn_in) {
      err_sum += err;
      motion_sum += motion;
      ++counted;
    }
  }
  if (counted > 0) {
    rep.mean_tracking_error = err_sum / static_cast<double>(counted);
    rep.mean_adapter_motion = motion_sum / static_cast<double>(counted);
    rep.tracking_ratio = rep.mean_adapter_motion > 0.0
                             ? rep.mean_tracking_error / rep.mean_adapter_motion
                             : 0.0;
  }
  rep.final_phi = phi;
  rep.final_psi = psi;
  return rep;
}

}  // namespace zofc
