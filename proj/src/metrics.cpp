// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zofc/rng.hpp"

namespace zofc {

EvalMatrix::EvalMatrix(std::size_t tasks) {
  for (std::size_t i = 0; i < tasks; ++i) {
    rows_.emplace_back(i + 1, 0.0);
    filled_.emplace_back(i + 1, 0);
  }
}

void EvalMatrix::set(std::size_t i, std::size_t j, double accuracy) {
  if (i >= tasks() || j > i) {
    throw DimensionError("EvalMatrix: entry (" + std::to_string(i) + "," + std::to_string(j) +
                         ") is outside the lower triangle");
  }
  if (!(accuracy >= 0.0 && accuracy <= 100.0)) {
    throw NumericError("EvalMatrix: accuracy must lie in [0, 100]");
  }
  rows_[i][j] = accuracy;
  filled_[i][j] = 1;
}

double EvalMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= tasks() || j > i) {
    throw DimensionError("EvalMatrix: entry (" + std::to_string(i) + "," + std::to_string(j) +
                         ") is outside the lower triangle");
  }
  if (filled_[i][j] == 0) {
    throw DimensionError("EvalMatrix: entry (" + std::to_string(i) + "," + std::to_string(j) +
                         ") has not been evaluated");
  }
  return rows_[i][j];
}

bool EvalMatrix::complete() const noexcept {
  for (const auto& row : filled_) {
    for (char f : row) {
      if (f == 0) return false;
    }
  }
  return true;
}

EvalMatrix EvalMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  EvalMatrix a(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != i + 1) {
      throw DimensionError("EvalMatrix: row " + std::to_string(i) + " must have " +
                           std::to_string(i + 1) + " entries");
    }
    for (std::size_t j = 0; j <= i; ++j) a.set(i, j, rows[i][j]);
  }
  return a;
}

namespace {
std::size_t require_tasks(const EvalMatrix& a, std::size_t minimum, std::string_view what) {
  if (a.tasks() < minimum) {
    throw ConfigError(std::string(what) + ": needs at least " + std::to_string(minimum) +
                      " task(s), got " + std::to_string(a.tasks()));
  }
  return a.tasks();
}
}  // namespace

double avg_accuracy(const EvalMatrix& a) {
  const std::size_t k = require_tasks(a, 1, "avg_accuracy");
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += a.at(k - 1, j);
  return sum / static_cast<double>(k);
}

double last_accuracy(const EvalMatrix& a) {
  const std::size_t k = require_tasks(a, 1, "last_accuracy");
  return a.at(k - 1, k - 1);
}

double forgetting(const EvalMatrix& a) {
  const std::size_t k = require_tasks(a, 2, "forgetting");
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < k; ++j) {
    double best = a.at(j, j);
    for (std::size_t i = j + 1; i < k; ++i) best = std::max(best, a.at(i, j));
    sum += best - a.at(k - 1, j);
  }
  const double fgt = sum / static_cast<double>(k - 1);
  if (fgt < 0.0) throw NumericError("forgetting: negative value from a max-based definition");
  return fgt;
}

MetricsReport metrics_after(const EvalMatrix& a, std::size_t tasks) {
  if (tasks == 0 || tasks > a.tasks()) throw DimensionError("metrics_after: task count out of range");
  EvalMatrix block(tasks);
  for (std::size_t i = 0; i < tasks; ++i) {
    for (std::size_t j = 0; j <= i; ++j) block.set(i, j, a.at(i, j));
  }
  MetricsReport m;
  m.tasks = tasks;
  m.avg = avg_accuracy(block);
  m.last = last_accuracy(block);
  if (tasks >= 2) m.fgt = forgetting(block);
  return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ProbeKind k) noexcept { return k == ProbeKind::ascent ? "ascent" : "random"; }

ProbeKind probe_kind_from_string(std::string_view s) {
  if (s == "ascent") return ProbeKind::ascent;
  if (s == "random") return ProbeKind::random;
  throw ConfigError("unknown probe kind '" + std::string(s) + "'");
}

namespace {

double phi_along(const ScalarFunction& loss, std::span<const double> theta, double rho,
                 std::span<const double> unit, double base, double& perturbed) {
  Vector point(theta);
  axpy(rho, unit, point.span());
  perturbed = loss(point);
  check_finite(perturbed, "sam_flatness L(theta+)");
  return (perturbed - base) / (rho * (base + kFlatnessDenominatorEps));
}

}  // namespace

FlatnessResult sam_flatness(const ScalarFunction& loss, std::span<const double> theta, double rho,
                            const ProbeSpec& probe, std::optional<std::span<const double>> gradient) {
  if (!(rho > 0.0)) throw ConfigError("sam_flatness: rho must be > 0");
  if (theta.empty()) throw DimensionError("sam_flatness: empty parameter vector");
  FlatnessResult out;
  out.loss = loss(theta);
  check_finite(out.loss, "sam_flatness L(theta)");

  if (probe.kind == ProbeKind::ascent) {
    Vector g = gradient ? Vector(*gradient) : central_gradient(loss, theta, probe.fd_step);
    require_same_size(g.size(), theta.size(), "sam_flatness gradient");
    const double n = norm2(g);
    out.descriptor = "ascent";
    if (n == 0.0) {
      out.loss_plus = out.loss;
      out.phi = 0.0;
      return out;
    }
    g *= 1.0 / n;
    out.phi = phi_along(loss, theta, rho, g, out.loss, out.loss_plus);
    return out;
  }

  if (probe.directions == 0) throw ConfigError("sam_flatness: need at least one random direction");
  RngStream stream("flatness-probe", probe.seed);
  double phi_sum = 0.0;
  double plus_sum = 0.0;
  for (std::size_t m = 0; m < probe.directions; ++m) {
    Vector u = gaussian(theta.size(), stream);
    u *= 1.0 / norm2(u);
    double plus = 0.0;
    phi_sum += phi_along(loss, theta, rho, u, out.loss, plus);
    plus_sum += plus;
  }
  out.phi = phi_sum / static_cast<double>(probe.directions);
  out.loss_plus = plus_sum / static_cast<double>(probe.directions);
  out.descriptor = "random-" + std::to_string(probe.directions);
  return out;
}

double hessian_trace(const ScalarFunction& loss, std::span<const double> theta, double h) {
  double tr = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) tr += central_second_difference(loss, theta, i, h);
  return tr;
}

EigenEstimate power_iteration(const MatVec& apply, std::size_t dim, const PowerIterationOptions& opts) {
  if (dim == 0) throw DimensionError("power_iteration: dim must be >= 1");
  RngStream stream("power-iteration", opts.seed);
  Vector v = gaussian(dim, stream);
  v *= 1.0 / norm2(v);
  EigenEstimate est;
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    Vector w = apply(v);
    require_same_size(w.size(), dim, "power_iteration");
    check_finite(w, "power_iteration");
    const double lambda = dot(v, w);
    const double wn = norm2(w);
    est.value = std::fabs(lambda);
    est.iterations = it;
    if (wn == 0.0) {
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    // residual |A v - lambda v|
    Vector r = w;
    axpy(-lambda, v, r.span());
    if (norm2(r) <= opts.tolerance * std::max(1.0, std::fabs(lambda))) {
      est.converged = true;
      return est;
    }
    v = std::move(w);
    v *= 1.0 / wn;
  }
  return est;
}

Vector finite_difference_hvp(const ScalarFunction& loss, std::span<const double> theta,
                             std::span<const double> v, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_hvp: step must be positive");
  require_same_size(theta.size(), v.size(), "finite_difference_hvp");
  Vector out(theta.size());
  Vector p(theta);
  auto eval = [&](std::size_t i, double si, double sv) {
    for (std::size_t k = 0; k < theta.size(); ++k) p[k] = theta[k] + sv * h * v[k];
    p[i] += si * h;
    const double f = loss(p);
    check_finite(f, "finite_difference_hvp");
    return f;
  };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = (eval(i, 1, 1) - eval(i, 1, -1) - eval(i, -1, 1) + eval(i, -1, -1)) / (4.0 * h * h);
  }
  return out;
}

EigenEstimate lambda_max(const ScalarFunction& loss, std::span<const double> theta, double h,
                         const PowerIterationOptions& opts) {
  return power_iteration(
      [&](std::span<const double> v) { return finite_difference_hvp(loss, theta, v, h); },
      theta.size(), opts);
}

double QuadraticLoss::operator()(std::span<const double> theta) const {
  require_same_size(theta.size(), center.size(), "QuadraticLoss");
  Vector d(theta);
  d -= center;
  return 0.5 * dot(d, matvec(hessian, d)) + offset;
}

Vector QuadraticLoss::gradient(std::span<const double> theta) const {
  require_same_size(theta.size(), center.size(), "QuadraticLoss::gradient");
  Vector d(theta);
  d -= center;
  return matvec(hessian, d);
}

ForgettingBound forgetting_bound_check(const QuadraticLoss& old_loss,
                                       std::span<const double> theta_t,
                                       std::span<const double> delta) {
  require_same_size(theta_t.size(), delta.size(), "forgetting_bound_check");
  Vector moved(theta_t);
  axpy(1.0, delta, moved.span());
  ForgettingBound out;
  out.forgetting = old_loss(moved) - old_loss(theta_t);
  PowerIterationOptions opts;
  opts.max_iterations = 20000;
  opts.tolerance = 1e-13;
  out.lambda_max =
      power_iteration([&](std::span<const double> v) { return matvec(old_loss.hessian, v); },
                      theta_t.size(), opts)
          .value;
  const double dn = norm2(delta);
  out.bound = 0.5 * out.lambda_max * dn * dn;
  out.satisfied = out.forgetting <= out.bound + 1e-12 * std::max(1.0, std::fabs(out.bound));
  return out;
}

}  // namespace zofc
