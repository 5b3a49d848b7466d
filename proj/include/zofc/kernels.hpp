// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops. Each kernel has a plain serial version that is
// kept as the reference and an OpenMP version that must agree with it bit for
// bit: parallel loops only write per-index slots, and every reduction is done
// afterwards in index order.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "zofc/model.hpp"
#include "zofc/numerics.hpp"

namespace zofc {

enum class Exec { serial, parallel };

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads() noexcept;

/// Rows of a cached feature matrix together with each row's head target.
struct BatchView {
  const Matrix* features = nullptr;
  std::span<const std::size_t> rows;
  std::span<const std::size_t> targets;
};

/// Mean cross-entropy of head(adapter(h)) over the batch.
double batch_loss_serial(const BatchView& batch, const AdapterView& adapter, const HeadView& head);
double batch_loss_omp(const BatchView& batch, const AdapterView& adapter, const HeadView& head);
double batch_loss(const BatchView& batch, const AdapterView& adapter, const HeadView& head,
                  Exec exec);

/// Correct class-incremental predictions over every row of `features`.
std::size_t count_correct_serial(const Matrix& features, std::span<const int> labels,
                                 const AdapterView& adapter, const ClassifierHead& head);
std::size_t count_correct_omp(const Matrix& features, std::span<const int> labels,
                              const AdapterView& adapter, const ClassifierHead& head);
std::size_t count_correct(const Matrix& features, std::span<const int> labels,
                          const AdapterView& adapter, const ClassifierHead& head, Exec exec);

/// Writes direction q into `out`.
using DirectionFn = std::function<void(std::size_t q, std::span<double> out)>;

struct ProbePair {
  double plus = 0.0;
  double minus = 0.0;
};

/// Evaluates f(theta + eps d_q) and f(theta - eps d_q) for q < queries.
/// theta itself is never written; each worker perturbs its own scratch copy.
std::vector<ProbePair> spsa_probes_serial(const ScalarFunction& f, std::span<const double> theta,
                                          std::size_t queries, const DirectionFn& direction,
                                          double eps);
std::vector<ProbePair> spsa_probes_omp(const ScalarFunction& f, std::span<const double> theta,
                                       std::size_t queries, const DirectionFn& direction,
                                       double eps);
std::vector<ProbePair> spsa_probes(const ScalarFunction& f, std::span<const double> theta,
                                   std::size_t queries, const DirectionFn& direction, double eps,
                                   Exec exec);

/// body(i) for i < n. Exceptions thrown by any iteration are rethrown (the
/// first by index) after the loop finishes.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, Exec exec);

}  // namespace zofc
