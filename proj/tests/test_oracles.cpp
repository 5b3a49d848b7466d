// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <string>

#include "doctest.h"
#include "zofc/error.hpp"
#include "zofc/oracles.hpp"

using namespace zofc;

namespace {

std::string sci4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

// Exact one-sided Fisher p-value using integer binomial coefficients.
double fisher_oracle(unsigned a, unsigned na, unsigned b, unsigned nb) {
  const auto choose = [](unsigned n, unsigned k) {
    if (k > n) return 0.0L;
    long double r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  const unsigned k = a + b;
  long double num = 0;
  for (unsigned x = a; x <= std::min(k, na); ++x) num += choose(na, x) * choose(nb, k - x);
  return static_cast<double>(num / choose(na + nb, k));
}

struct Quartic {
  Vector coef, shift;
  double operator()(std::span<const double> t) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double u = t[i] - shift[i];
      acc += coef[i] * u * u * u * u + 0.5 * u * u;
    }
    return acc;
  }
};

TwoWellLandscape default_wells() {
  TwoWellLandscape w;
  w.sharp_center = Vector{-2.0, 0.0};
  w.flat_center = Vector{2.0, 0.0};
  w.sharp_width = 0.25;
  w.flat_width = 1.0;
  return w;
}

}  // namespace

TEST_SUITE("oracles") {

TEST_CASE("smoothed loss examples") {
  Matrix h(2, 2);
  h(0, 0) = 2;
  h(1, 1) = 4;
  const QuadraticLoss q{h, Vector(2), 0.0};
  const ScalarFunction fq = [&](std::span<const double> t) { return q(t); };
  const auto e = smoothed_loss(fq, Vector(2), 0.1, PerturbationLaw::rademacher, SmoothingMode::enumerate);
  CHECK(e.value == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(e.samples == 4);
  CHECK(e.std_error == 0.0);

  const ScalarFunction quartic = [](std::span<const double> t) { return std::pow(t[0], 4); };
  const auto r = smoothed_loss(quartic, Vector{0.0}, 0.1, PerturbationLaw::rademacher,
                               SmoothingMode::enumerate);
  CHECK(r.value == doctest::Approx(1e-4).epsilon(1e-12));

  const ScalarFunction any = [](std::span<const double> t) { return std::sin(t[0]) + t[1]; };
  const Vector theta{0.3, 0.9};
  CHECK(smoothed_loss(any, theta, 0.0, PerturbationLaw::rademacher, SmoothingMode::enumerate).value ==
        any(theta));
  CHECK(smoothed_loss(any, theta, 0.0, PerturbationLaw::gaussian, SmoothingMode::monte_carlo, 10, 1)
            .value == doctest::Approx(any(theta)).epsilon(1e-15));

  CHECK_THROWS_AS(smoothed_loss(any, Vector(21), 0.1, PerturbationLaw::rademacher,
                                SmoothingMode::enumerate),
                  ConfigError);
  CHECK_THROWS_AS(smoothed_loss(any, theta, 0.1, PerturbationLaw::gaussian, SmoothingMode::enumerate),
                  ConfigError);
  CHECK_THROWS_AS(smoothed_loss(any, theta, 0.1, PerturbationLaw::gaussian,
                                SmoothingMode::monte_carlo, 0),
                  ConfigError);
}

TEST_CASE("smoothing identity on quadratics is exact") {
  RngStream s("smooth-quad", 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + s.next_below(10);
    Matrix a(d, d);
    for (double& v : a.flat()) v = s.next_gaussian();
    const QuadraticLoss q{matmul(transpose(a), a), gaussian(d, s), 0.3};
    const ScalarFunction f = [&](std::span<const double> t) { return q(t); };
    double tr = 0.0;
    for (std::size_t i = 0; i < d; ++i) tr += q.hessian(i, i);
    const Vector theta = gaussian(d, s);
    const double eps = 0.05;
    const auto sm = smoothed_loss(f, theta, eps, PerturbationLaw::rademacher, SmoothingMode::enumerate);
    CHECK(std::abs(sm.value - f(theta) - 0.5 * eps * eps * tr) <= 1e-10);
    // Smoothing a quadratic only adds a constant, so its Hessian trace is unchanged.
    const ScalarFunction smoothed = [&](std::span<const double> t) {
      return smoothed_loss(f, t, eps, PerturbationLaw::rademacher, SmoothingMode::enumerate).value;
    };
    if (d <= 4) CHECK(hessian_trace(smoothed, theta, 1e-3) == doctest::Approx(tr).epsilon(1e-5));
  }
}

TEST_CASE("smoothing residual on quartics is fourth order") {
  RngStream s("smooth-quartic", 2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + s.next_below(6);
    Quartic q{gaussian(d, s), gaussian(d, s)};
    for (double& c : q.coef) c = std::abs(c) + 0.1;
    const ScalarFunction f = [&](std::span<const double> t) { return q(t); };
    const Vector theta = gaussian(d, s);
    const auto residual = [&](double eps) {
      const double tr = hessian_trace(f, theta, 1e-4);
      const double sm =
          smoothed_loss(f, theta, eps, PerturbationLaw::rademacher, SmoothingMode::enumerate).value;
      return std::abs(sm - f(theta) - 0.5 * eps * eps * tr);
    };
    const double r1 = residual(0.2), r2 = residual(0.1);
    CHECK(r1 / r2 >= 15.0);
  }
}

TEST_CASE("Monte Carlo smoothing agrees with enumeration") {
  RngStream s("smooth-mc", 3);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t d = 2 + s.next_below(7);
    const Quartic q{gaussian(d, s), gaussian(d, s)};
    const ScalarFunction f = [&](std::span<const double> t) { return q(t); };
    const Vector theta = gaussian(d, s);
    const double eps = 0.3;
    const auto exact = smoothed_loss(f, theta, eps, PerturbationLaw::rademacher, SmoothingMode::enumerate);
    const auto mc = smoothed_loss(f, theta, eps, PerturbationLaw::rademacher,
                                  SmoothingMode::monte_carlo, 1000000, 40 + trial, Exec::parallel);
    CHECK(mc.samples == 1000000);
    CHECK(mc.std_error > 0.0);
    CHECK(std::abs(mc.value - exact.value) < 4.0 * mc.std_error);
    const auto again = smoothed_loss(f, theta, eps, PerturbationLaw::rademacher,
                                     SmoothingMode::monte_carlo, 1000000, 40 + trial, Exec::serial);
    CHECK(again.value == mc.value);
  }
}

TEST_CASE("two-well landscape") {
  const TwoWellLandscape w = default_wells();
  CHECK_NOTHROW(w.validate());
  const ScalarFunction f = [&](std::span<const double> t) { return w(t); };
  CHECK(hessian_trace(f, w.sharp_center, 1e-4) > hessian_trace(f, w.flat_center, 1e-4));
  // Equal depths up to the tail of the other well.
  CHECK(std::abs(w(w.sharp_center) - w(w.flat_center)) < 1e-3);
  CHECK(w.classification_radius() == 2.0);
  RngStream s("wells", 1);
  for (int i = 0; i < 20; ++i) {
    const Vector t = gaussian(2, s);
    CHECK(norm2(w.gradient(t) - central_gradient(f, t, 1e-6)) < 1e-7);
  }
  CHECK(classify_basin(w, w.flat_center) == Basin::flat);
  CHECK(classify_basin(w, Vector{-2.2, 0.1}) == Basin::sharp);
  CHECK(classify_basin(w, Vector{0.0, 9.0}) == Basin::neither);
  CHECK(to_string(Basin::neither) == "neither");

  TwoWellLandscape bad = w;
  bad.sharp_width = 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("basin trials") {
  FlatMinimaTrialSpec spec;
  spec.landscape = default_wells();
  spec.init_center = spec.landscape.flat_center;
  spec.steps = 0;
  CHECK(flat_minima_trial(spec, {}, 1) == Basin::flat);

  // Tiny-step descent stays in the well it starts in.
  spec.init_center = Vector{-1.9, 0.05};
  spec.steps = 200;
  spec.lr = 1e-3;
  CHECK(flat_minima_trial(spec, {}, 2) == Basin::sharp);
  spec.init_center = Vector{2.3, -0.2};
  CHECK(flat_minima_trial(spec, {}, 3) == Basin::flat);

  // Divergence counts as neither.
  spec.lr = 1e9;
  spec.divergence_bound = 10.0;
  spec.init_center = Vector{-1.8, 0.0};
  CHECK(flat_minima_trial(spec, {}, 4) == Basin::neither);

  // Counts are reproducible and independent of the execution policy.
  spec.lr = 0.05;
  spec.init_center = Vector{0.0, 0.0};
  spec.init_spread = 1.5;
  TrialOptimizer zo{TrialOptimizer::Kind::zo, {}};
  zo.spsa.epsilon = 0.3;
  const auto a = flat_minima_trials(spec, zo, 40, 9, Exec::parallel);
  const auto b = flat_minima_trials(spec, zo, 40, 9, Exec::serial);
  CHECK(a.flat == b.flat);
  CHECK(a.sharp == b.sharp);
  CHECK(a.total() == 40);
}

TEST_CASE("one-sided Fisher exact test") {
  CHECK(fisher_exact_greater(3, 3, 0, 3) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(fisher_exact_greater(0, 5, 5, 5) == doctest::Approx(1.0).epsilon(1e-12));
  for (unsigned a : {0u, 7u, 19u, 40u}) {
    for (unsigned b : {0u, 5u, 20u, 33u}) {
      CHECK(fisher_exact_greater(a, 40, b, 50) ==
            doctest::Approx(fisher_oracle(a, 40, b, 50)).epsilon(1e-9));
    }
  }
  CHECK(fisher_exact_greater(150, 200, 90, 200) < 1e-8);
  CHECK_THROWS_AS(fisher_exact_greater(5, 4, 0, 1), ConfigError);
}

TEST_CASE("cost model reproduces the reference table") {
  FlopsModel m;
  CHECK(m.tokens() == 197);
  m.regime = FlopsRegime::fo;
  const CostReport fo = flops_estimate(m);
  CHECK(fo.adapter_flops_per_image == 15129600.0);
  CHECK(fo.head_flops_per_image == 21509.0);
  CHECK(fo.forwards_per_batch == 1);
  CHECK(sci4(fo.forward_flops) == "8.484e+11");
  CHECK(sci4(fo.backward_flops) == "1.697e+12");
  CHECK(sci4(fo.total_flops) == "2.545e+12");
  CHECK(fo.ratio_vs_fo == doctest::Approx(1.0));

  struct Row {
    FlopsRegime regime;
    std::size_t q, forwards;
    const char* forward;
    const char* backward;
    const char* total;
    const char* ratio;
  };
  const Row rows[] = {
      {FlopsRegime::zo, 1, 3, "2.545e+12", "0.000e+00", "2.545e+12", "1.00"},
      {FlopsRegime::zo, 4, 9, "7.636e+12", "0.000e+00", "7.636e+12", "3.00"},
      {FlopsRegime::zofc_early, 1, 3, "2.545e+12", "2.065e+06", "2.545e+12", "1.00"},
      {FlopsRegime::zofc_late, 1, 3, "2.545e+12", "0.000e+00", "2.545e+12", "1.00"},
      {FlopsRegime::zofc_early, 4, 9, "7.636e+12", "2.065e+06", "7.636e+12", "3.00"},
      {FlopsRegime::zofc_late, 4, 9, "7.636e+12", "0.000e+00", "7.636e+12", "3.00"},
  };
  for (const Row& r : rows) {
    m.regime = r.regime;
    m.queries = r.q;
    const CostReport c = flops_estimate(m);
    CAPTURE(to_string(r.regime));
    CAPTURE(r.q);
    CHECK(c.forwards_per_batch == r.forwards);
    CHECK(sci4(c.forward_flops) == r.forward);
    CHECK(sci4(c.backward_flops) == r.backward);
    CHECK(sci4(c.total_flops) == r.total);
    char ratio[16];
    std::snprintf(ratio, sizeof ratio, "%.2f", c.ratio_vs_fo);
    CHECK(std::string(ratio) == r.ratio);
  }
  m.regime = FlopsRegime::zofc_early;
  m.queries = 4;
  CHECK(flops_estimate(m).backward_flops == 2064864.0);
  m.count_eval_forward = true;
  CHECK(flops_estimate(m).forwards_per_batch == 10);

  CHECK(flops_regime_from_string("zofc-late") == FlopsRegime::zofc_late);
  CHECK_THROWS_AS(flops_regime_from_string("sideways"), ConfigError);
  FlopsModel bad;
  bad.batch = 0;
  CHECK_THROWS_AS(flops_estimate(bad), ConfigError);
}

TEST_CASE("activation memory proxy") {
  const ActivationDims dims{{1024, 768}, 768, 5};
  const std::size_t b = 48;
  CHECK(activation_memory_proxy(variant_by_name("zo-adapter-zo-cls"), dims, b) == 0);
  CHECK(activation_memory_proxy(zofc_variant(), dims, b) == 36864);
  CHECK(activation_memory_proxy(variant_by_name("learnable-cls"), dims, b) == 36864);
  CHECK(activation_memory_proxy(variant_by_name("prototype"), dims, b) == 0);
  const auto fo = activation_memory_proxy(variant_by_name("fo-adapter-fo-cls"), dims, b);
  CHECK(fo == 48u * (768 + 5 + 1024 + 768));
  RngStream s("proxy", 1);
  for (int i = 0; i < 50; ++i) {
    ActivationDims d{{1 + s.next_below(900), 1 + s.next_below(900)}, 1 + s.next_below(900),
                     1 + s.next_below(16)};
    d.backbone_widths.back() = d.dim;
    const std::size_t batch = 1 + s.next_below(128);
    const auto zo = activation_memory_proxy(variant_by_name("zo-adapter-zo-cls"), d, batch);
    const auto hy = activation_memory_proxy(zofc_variant(), d, batch);
    for (const char* name : {"fo-adapter-fo-cls", "fo-adapter-zo-cls"}) {
      const auto f = activation_memory_proxy(variant_by_name(name), d, batch);
      CHECK(hy < f);
    }
    CHECK(zo == 0);
    CHECK(hy == batch * d.dim);
  }
}

TEST_CASE("hybrid two-time-scale dynamics") {
  HybridDynamicsSpec spec;
  spec.problem = make_hybrid_problem(40, 4, 5);
  spec.spsa.epsilon = 1e-3;

  SUBCASE("frozen adapter: the head converges to its closed-form optimum") {
    spec.slow_lr = 0.0;
    spec.fast_lr = 0.1;
    spec.steps = 3000;
    const auto r = hybrid_dynamics_check(spec);
    CHECK_FALSE(r.diverged);
    CHECK(r.tracking_error.back() < 1e-6);
    CHECK(r.mean_adapter_motion == 0.0);
    CHECK(r.tracking_ratio == 0.0);
    const Vector star = spec.problem.optimal_head(r.final_phi);
    const ScalarFunction f = [&](std::span<const double> psi) {
      return spec.problem.loss(r.final_phi, psi);
    };
    CHECK(norm2(central_gradient(f, star, 1e-6)) < 1e-7);
    CHECK(norm2(spec.problem.head_gradient(r.final_phi, star)) < 1e-9);
  }

  SUBCASE("a faster head tracks more closely") {
    spec.fast_lr = 0.1;
    spec.slow_lr = 1e-3;
    const auto r100 = hybrid_dynamics_check(spec);
    spec.slow_lr = 1e-2;
    const auto r10 = hybrid_dynamics_check(spec);
    CHECK_FALSE(r100.diverged);
    CHECK_FALSE(r10.diverged);
    MESSAGE("tracking error 100:1 " << r100.mean_tracking_error << ", 10:1 "
                                    << r10.mean_tracking_error);
    CHECK(r100.mean_tracking_error < r10.mean_tracking_error);
  }

  SUBCASE("zero learning rates mean no motion") {
    spec.fast_lr = 0.0;
    spec.slow_lr = 0.0;
    spec.steps = 50;
    const auto r = hybrid_dynamics_check(spec);
    for (double m : r.adapter_motion) CHECK(m == 0.0);
    CHECK(r.final_phi == Vector(4));
    CHECK(r.final_psi == Vector(4));
  }

  SUBCASE("divergence is flagged") {
    spec.fast_lr = 100.0;
    const auto r = hybrid_dynamics_check(spec);
    CHECK(r.diverged);
  }
}

}  // TEST_SUITE
