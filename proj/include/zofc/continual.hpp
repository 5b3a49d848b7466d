// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "zofc/kernels.hpp"
#include "zofc/metrics.hpp"
#include "zofc/model.hpp"
#include "zofc/optim.hpp"
#include "zofc/rng.hpp"

namespace zofc {

// ---------------------------------------------------------------------------
// Task streams

struct LabeledSet {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
  friend bool operator==(const LabeledSet&, const LabeledSet&) = default;
};

struct Task {
  LabeledSet train;
  LabeledSet test;
  std::vector<int> classes;

  friend bool operator==(const Task&, const Task&) = default;
};

/// Class-incremental sequence of tasks with pairwise disjoint class sets.
struct TaskStream {
  std::vector<Task> tasks;
  std::size_t input_dim = 0;

  /// Disjoint class sets, every class with >= 1 train and >= 1 test row,
  /// consistent widths.
  void validate() const;
  friend bool operator==(const TaskStream&, const TaskStream&) = default;
};

struct SyntheticStreamSpec {
  std::size_t num_tasks = 5;
  std::size_t classes_per_task = 2;
  std::size_t dim = 16;
  std::size_t examples_per_class = 60;
  std::size_t test_examples_per_class = 60;
  /// Radius of the sphere the class means are drawn on.
  double separation = 3.0;
  /// Isotropic per-coordinate standard deviation around each mean.
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SyntheticStreamSpec&, const SyntheticStreamSpec&) = default;
};

/// Each class is an isotropic Gaussian cluster; class ids are 0, 1, ... in
/// task order.
TaskStream make_synthetic_stream(const SyntheticStreamSpec& spec);

/// Groups labeled rows into tasks of `classes_per_task` classes, taking class
/// ids in ascending order.
TaskStream stream_from_labeled_sets(const LabeledSet& train, const LabeledSet& test,
                                    std::size_t classes_per_task);

/// Backbone outputs, computed once per dataset because the backbone is frozen.
TaskStream cache_features(const TaskStream& stream, const FrozenBackbone& backbone);

// ---------------------------------------------------------------------------
// Method variants

enum class ComponentOptimizer { none, fo, zo };

std::string_view to_string(ComponentOptimizer o) noexcept;
ComponentOptimizer component_optimizer_from_string(std::string_view s);

struct MethodVariant {
  std::string name;
  ComponentOptimizer adapter = ComponentOptimizer::zo;
  HeadFamily head_family = HeadFamily::cosine;
  ComponentOptimizer head = ComponentOptimizer::fo;

  void validate() const;
  /// Prototype classifier with an adapter trained through a temporary head.
  bool adapter_with_prototypes() const noexcept {
    return head_family == HeadFamily::prototype && adapter != ComponentOptimizer::none;
  }
  friend bool operator==(const MethodVariant&, const MethodVariant&) = default;
};

MethodVariant zofc_variant();
/// The seven adapter/classifier optimizer combinations compared in the grid.
std::vector<MethodVariant> standard_variants();
MethodVariant variant_by_name(std::string_view name);

struct TrainBudget {
  std::size_t head_epochs = 10;
  std::size_t adapter_epochs = 20;
  std::size_t batch_size = 48;

  void validate() const;
  friend bool operator==(const TrainBudget&, const TrainBudget&) = default;
};

struct TrainingConfig {
  MethodVariant variant = zofc_variant();
  TrainBudget budget;
  SpsaConfig spsa;
  /// total_steps is filled in per task from the budget.
  LrSchedule head_schedule{ScheduleKind::cosine, 0.01, 1};
  LrSchedule adapter_schedule{ScheduleKind::constant, 0.01, 1};
  std::size_t adapter_rank = 5;
  double adapter_init_scale = 1.0;
  double cosine_scale = kDefaultCosineScale;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;

  void validate() const;
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct TrainCounters {
  std::uint64_t fo_steps = 0;
  std::uint64_t zo_steps = 0;
  std::uint64_t loss_evaluations = 0;
  std::uint64_t clipped_steps = 0;
  /// Running FNV-style digest over every perturbation record.
  std::uint64_t perturbation_digest = 0xCBF29CE484222325ULL;
  std::uint64_t perturbation_records = 0;

  friend bool operator==(const TrainCounters&, const TrainCounters&) = default;
};

struct TrainerStreams {
  RngStream shuffle{"shuffle", 0};
  RngStream head_init{"head-init", 0};
  RngStream zo_adapter{"zo-adapter", 0};
  RngStream zo_head{"zo-head", 0};

  friend bool operator==(const TrainerStreams&, const TrainerStreams&) = default;
};

/// Everything that evolves across tasks. Copying a state is a snapshot.
struct ModelState {
  Adapter adapter;
  ClassifierHead head;
  std::size_t tasks_done = 0;
  TrainerStreams streams;
  TrainCounters counters;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

ModelState initial_state(const TrainingConfig& cfg, std::size_t feature_dim);

/// Called after each ZO step with the step's records, for instrumentation.
using ZoObserver = std::function<void(std::string_view component, const ZoStepResult&)>;

/// Trains one task of cached features with the hybrid procedure: per batch,
/// an FO step on the head (adapter fixed), then a Q-query SPSA step on the
/// adapter against the updated head. Requires adapter=ZO, head=FO.
void train_task_zofc(const Task& task, ModelState& state, const TrainingConfig& cfg,
                     const ZoObserver& observer = {});

/// Dispatches FO / ZO / none per component for any valid variant.
void train_task_variant(const Task& task, ModelState& state, const TrainingConfig& cfg,
                        const ZoObserver& observer = {});

/// Percent correct on `set`, predicting among every class registered so far.
double accuracy(const LabeledSet& set, const ModelState& state, Exec exec = Exec::parallel);

/// A[i][j] = accuracy of snapshots[i] on tasks[j].test, for j <= i.
EvalMatrix evaluate_stream(const TaskStream& features, const std::vector<ModelState>& snapshots,
                           Exec exec = Exec::parallel);

struct StreamRun {
  std::vector<ModelState> snapshots;
  EvalMatrix matrix;
};

/// Resumes after the tasks covered by `prior` (one snapshot per finished
/// task), trains the rest in order and evaluates the full matrix.
StreamRun run_stream(const TaskStream& features, const TrainingConfig& cfg,
                     std::vector<ModelState> prior);
StreamRun run_stream(const TaskStream& features, const TrainingConfig& cfg);

// ---------------------------------------------------------------------------
// Loss views used by training and by the flatness probes

enum class ParamTarget { adapter, head, all };

std::string_view to_string(ParamTarget t) noexcept;
ParamTarget param_target_from_string(std::string_view s);

/// Mean cross-entropy of `state` on `rows` of `data` as a function of the
/// selected parameters (concatenated adapter then head for `all`).
struct StateLoss {
  LabeledSet data;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
  ModelState state;
  ParamTarget target = ParamTarget::all;
  Exec exec = Exec::serial;

  double operator()(std::span<const double> params) const;
  Vector parameters() const;
  Vector gradient(std::span<const double> params) const;
};

/// Loss over the union of the training sets of tasks [0, upto).
StateLoss old_task_loss(const TaskStream& features, std::size_t upto, const ModelState& state,
                        ParamTarget target, Exec exec = Exec::serial);

}  // namespace zofc
