// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace zofc {

std::string_view to_string(PerturbationLaw law) noexcept {
  return law == PerturbationLaw::rademacher ? "rademacher" : "gaussian";
}

PerturbationLaw perturbation_law_from_string(std::string_view s) {
  if (s == "rademacher") return PerturbationLaw::rademacher;
  if (s == "gaussian") return PerturbationLaw::gaussian;
  throw ConfigError("unknown perturbation law '" + std::string(s) + "'");
}

void SpsaConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("spsa: epsilon must be > 0");
  if (queries < 1) throw ConfigError("spsa: queries must be >= 1");
  if (!(clip_threshold > 0.0)) throw ConfigError("spsa: clip threshold must be > 0");
}

namespace {

RngStream direction_stream(const PerturbationRecord& r) {
  return RngStream("spsa-direction", mix64(mix64(r.seed ^ r.step) + r.query * 0x9E3779B97F4A7C15ULL));
}

void fill_direction(const PerturbationRecord& r, std::span<double> out) {
  RngStream s = direction_stream(r);
  if (r.law == PerturbationLaw::rademacher) {
    for (double& x : out) x = s.next_sign();
  } else {
    for (double& x : out) x = s.next_gaussian();
  }
}

}  // namespace

Vector replay_direction(const PerturbationRecord& record, std::size_t dim) {
  if (dim != record.dim) {
    throw DimensionError("replay_direction: record dim " + std::to_string(record.dim) +
                         " does not match " + std::to_string(dim));
  }
  if (dim == 0) throw DimensionError("replay_direction: dim must be >= 1");
  Vector d(dim);
  fill_direction(record, d.span());
  return d;
}

Vector spsa_estimate(const ScalarFunction& loss, std::span<const double> theta,
                     std::span<const double> delta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("spsa_estimate: eps must be > 0");
  require_same_size(theta.size(), delta.size(), "spsa_estimate");
  for (double d : delta) {
    if (d == 0.0) throw NumericError("spsa_estimate: direction has a zero entry");
  }
  const auto pair = spsa_probes_serial(
      loss, theta, 1,
      [&](std::size_t, std::span<double> out) { std::copy(delta.begin(), delta.end(), out.begin()); },
      eps);
  check_finite(pair[0].plus, "spsa_estimate L(theta + eps d)");
  check_finite(pair[0].minus, "spsa_estimate L(theta - eps d)");
  const double scale = (pair[0].plus - pair[0].minus) / (2.0 * eps);
  Vector g(delta);
  g *= scale;
  return g;
}

ZoStepResult zo_sgd_step(const ScalarFunction& loss, Vector& params, const SpsaConfig& cfg,
                         double lr, RngStream& stream, Exec exec) {
  cfg.validate();
  const std::size_t dim = params.size();
  if (dim == 0) throw DimensionError("zo_sgd_step: empty parameter vector");

  ZoStepResult out;
  out.records.resize(cfg.queries);
  const std::uint64_t base_seed = mix64(hash_name(stream.name()) ^ stream.seed());
  for (std::size_t q = 0; q < cfg.queries; ++q) {
    out.records[q] = {base_seed, stream.counter(), q, dim, cfg.epsilon, cfg.law, 0.0};
  }
  stream.skip(1);

  const auto probes = spsa_probes(
      loss, params.span(), cfg.queries,
      [&](std::size_t q, std::span<double> d) { fill_direction(out.records[q], d); }, cfg.epsilon,
      exec);

  double loss_sum = 0.0;
  for (std::size_t q = 0; q < cfg.queries; ++q) {
    const auto& p = probes[q];
    if (!std::isfinite(p.plus) || !std::isfinite(p.minus)) {
      throw NumericError("zo_sgd_step: non-finite loss at query " + std::to_string(q));
    }
    out.records[q].projected_grad = (p.plus - p.minus) / (2.0 * cfg.epsilon);
    loss_sum += p.plus + p.minus;
  }
  out.mean_loss = loss_sum / static_cast<double>(2 * cfg.queries);

  // Directions are regenerated here rather than kept from the probe pass.
  Vector mean(dim), d(dim);
  for (const auto& r : out.records) {
    fill_direction(r, d.span());
    axpy(r.projected_grad, d.span(), mean.span());
  }
  mean *= 1.0 / static_cast<double>(cfg.queries);
  out.raw_norm = norm2(mean);
  const Vector clipped = l2_clip(mean, cfg.clip_threshold);
  out.clipped = !(clipped == mean);
  out.update = lr * clipped;
  params -= out.update;
  return out;
}

Vector reconstruct_update(std::span<const PerturbationRecord> records, std::size_t dim, double lr,
                          double clip_threshold) {
  if (records.empty()) throw DimensionError("reconstruct_update: no records");
  Vector mean(dim);
  for (const auto& r : records) {
    const Vector d = replay_direction(r, dim);
    axpy(r.projected_grad, d.span(), mean.span());
  }
  mean *= 1.0 / static_cast<double>(records.size());
  return lr * l2_clip(mean, clip_threshold);
}

Vector fo_sgd_step(std::span<const double> grad, std::span<const double> params, double lr) {
  require_same_size(grad.size(), params.size(), "fo_sgd_step");
  check_finite(grad, "fo_sgd_step gradient");
  Vector out(params);
  axpy(-lr, grad, out.span());
  return out;
}

std::string_view to_string(ScheduleKind k) noexcept {
  return k == ScheduleKind::constant ? "constant" : "cosine";
}

ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}

double lr_at(const LrSchedule& schedule, std::size_t t) {
  if (t > schedule.total_steps) {
    throw ConfigError("lr_at: step " + std::to_string(t) + " exceeds total " +
                      std::to_string(schedule.total_steps));
  }
  if (schedule.kind == ScheduleKind::constant) return schedule.base_lr;
  if (schedule.total_steps == 0) return schedule.base_lr;
  const double frac = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace zofc
