// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/kernels.hpp"

#include <exception>

#ifdef ZOFC_HAVE_OPENMP
#include <omp.h>
#endif

namespace zofc {

int max_threads() noexcept {
#ifdef ZOFC_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

void check_batch(const BatchView& batch) {
  if (batch.features == nullptr) throw DimensionError("batch_loss: null feature matrix");
  require_same_size(batch.rows.size(), batch.targets.size(), "batch_loss targets");
  if (batch.rows.empty()) throw DimensionError("batch_loss: empty batch");
}

double example_loss(const BatchView& batch, std::size_t k, const AdapterView& adapter,
                    const HeadView& head, Vector& z, Vector& mid, Vector& scores) {
  adapter_forward_into(adapter, batch.features->row(batch.rows[k]), z.span(), mid.span());
  head_scores_into(z, head, scores.span());
  return cross_entropy(scores, batch.targets[k]).value;
}

double ordered_mean(const std::vector<double>& terms) {
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(terms.size());
}

int predict_one(std::span<const double> h, const AdapterView& adapter, const ClassifierHead& head,
                Vector& z, Vector& mid, Vector& scores) {
  adapter_forward_into(adapter, h, z.span(), mid.span());
  if (head.family() == HeadFamily::prototype) return prototype_predict(z, head);
  head_scores_into(z, head.view(), scores.span());
  return argmax_predict(scores, head.class_ids());
}

void rethrow_first(std::vector<std::exception_ptr>& errors) {
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

double batch_loss_serial(const BatchView& batch, const AdapterView& adapter, const HeadView& head) {
  check_batch(batch);
  std::vector<double> terms(batch.rows.size());
  Vector z(adapter.dim), mid(adapter.rank), scores(head.classes);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    terms[k] = example_loss(batch, k, adapter, head, z, mid, scores);
  }
  return ordered_mean(terms);
}

double batch_loss_omp(const BatchView& batch, const AdapterView& adapter, const HeadView& head) {
  check_batch(batch);
  const auto n = static_cast<std::ptrdiff_t>(batch.rows.size());
  std::vector<double> terms(batch.rows.size());
  std::vector<std::exception_ptr> errors(batch.rows.size());
#pragma omp parallel
  {
    Vector z(adapter.dim), mid(adapter.rank), scores(head.classes);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      try {
        terms[k] = example_loss(batch, static_cast<std::size_t>(k), adapter, head, z, mid, scores);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  }
  rethrow_first(errors);
  return ordered_mean(terms);
}

double batch_loss(const BatchView& batch, const AdapterView& adapter, const HeadView& head,
                  Exec exec) {
  return exec == Exec::parallel ? batch_loss_omp(batch, adapter, head)
                                : batch_loss_serial(batch, adapter, head);
}

std::size_t count_correct_serial(const Matrix& features, std::span<const int> labels,
                                 const AdapterView& adapter, const ClassifierHead& head) {
  require_same_size(features.rows(), labels.size(), "count_correct labels");
  Vector z(adapter.dim), mid(adapter.rank), scores(head.num_classes());
  std::size_t correct = 0;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    if (predict_one(features.row(r), adapter, head, z, mid, scores) == labels[r]) ++correct;
  }
  return correct;
}

std::size_t count_correct_omp(const Matrix& features, std::span<const int> labels,
                              const AdapterView& adapter, const ClassifierHead& head) {
  require_same_size(features.rows(), labels.size(), "count_correct labels");
  const auto n = static_cast<std::ptrdiff_t>(features.rows());
  std::vector<char> hit(features.rows(), 0);
  std::vector<std::exception_ptr> errors(features.rows());
#pragma omp parallel
  {
    Vector z(adapter.dim), mid(adapter.rank), scores(head.num_classes());
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      try {
        const auto row = static_cast<std::size_t>(r);
        hit[row] = predict_one(features.row(row), adapter, head, z, mid, scores) == labels[row];
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  }
  rethrow_first(errors);
  std::size_t correct = 0;
  for (char h : hit) correct += h != 0 ? 1 : 0;
  return correct;
}

std::size_t count_correct(const Matrix& features, std::span<const int> labels,
                          const AdapterView& adapter, const ClassifierHead& head, Exec exec) {
  return exec == Exec::parallel ? count_correct_omp(features, labels, adapter, head)
                                : count_correct_serial(features, labels, adapter, head);
}

namespace {

ProbePair probe_one(const ScalarFunction& f, std::span<const double> theta, std::size_t q,
                    const DirectionFn& direction, double eps, Vector& dir, Vector& point) {
  direction(q, dir.span());
  for (std::size_t i = 0; i < theta.size(); ++i) point[i] = theta[i] + eps * dir[i];
  ProbePair p;
  p.plus = f(point);
  for (std::size_t i = 0; i < theta.size(); ++i) point[i] = theta[i] - eps * dir[i];
  p.minus = f(point);
  return p;
}

}  // namespace

std::vector<ProbePair> spsa_probes_serial(const ScalarFunction& f, std::span<const double> theta,
                                          std::size_t queries, const DirectionFn& direction,
                                          double eps) {
  std::vector<ProbePair> out(queries);
  Vector dir(theta.size()), point(theta.size());
  for (std::size_t q = 0; q < queries; ++q) out[q] = probe_one(f, theta, q, direction, eps, dir, point);
  return out;
}

std::vector<ProbePair> spsa_probes_omp(const ScalarFunction& f, std::span<const double> theta,
                                       std::size_t queries, const DirectionFn& direction,
                                       double eps) {
  std::vector<ProbePair> out(queries);
  std::vector<std::exception_ptr> errors(queries);
  const auto n = static_cast<std::ptrdiff_t>(queries);
#pragma omp parallel
  {
    Vector dir(theta.size()), point(theta.size());
#pragma omp for schedule(static)
    for (std::ptrdiff_t q = 0; q < n; ++q) {
      try {
        out[q] = probe_one(f, theta, static_cast<std::size_t>(q), direction, eps, dir, point);
      } catch (...) {
        errors[q] = std::current_exception();
      }
    }
  }
  rethrow_first(errors);
  return out;
}

std::vector<ProbePair> spsa_probes(const ScalarFunction& f, std::span<const double> theta,
                                   std::size_t queries, const DirectionFn& direction, double eps,
                                   Exec exec) {
  return exec == Exec::parallel ? spsa_probes_omp(f, theta, queries, direction, eps)
                                : spsa_probes_serial(f, theta, queries, direction, eps);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, Exec exec) {
  std::vector<std::exception_ptr> errors(n);
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    const auto m = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  rethrow_first(errors);
}

}  // namespace zofc
