// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zofc/config.hpp"
#include "zofc/continual.hpp"
#include "zofc/oracles.hpp"
#include "zofc/report.hpp"

namespace zofc {

// ---------------------------------------------------------------------------
// Experiment pieces shared by the commands and the acceptance suite

FrozenBackbone make_backbone(const BackboneConfig& cfg, std::size_t input_dim);

/// Raw stream (synthetic or loaded from feature files) pushed through the
/// frozen backbone once.
TaskStream build_feature_stream(const ExperimentConfig& cfg);

ActivationDims activation_dims(const ExperimentConfig& cfg, std::size_t feature_dim);

/// Cost regime of a variant: FO if any component needs a backward pass
/// through the adapter (or the only trained component is an FO head), ZO if
/// everything is gradient-free, hybrid early when a ZO adapter is paired with
/// an FO head. None for variants that train nothing.
std::optional<FlopsRegime> cost_regime(const MethodVariant& v);

/// Flatness of the old-task loss at every checkpoint t >= 2, for every rho
/// and probe kind. Empty for variants without a learnable head.
std::vector<FlatnessSample> flatness_series(const TaskStream& features,
                                            const std::vector<ModelState>& snapshots,
                                            const ProbeConfig& probe,
                                            Exec exec = Exec::parallel);

/// Samples for the snapshot taken after task `checkpoint` (1-based).
std::vector<FlatnessSample> flatness_at(const TaskStream& features, std::size_t checkpoint,
                                        const ModelState& state, const ProbeConfig& probe);

struct RunOutcome {
  RunReport report;
  std::vector<ModelState> snapshots;
};

/// Trains the remaining tasks after `prior` (snapshots of tasks already done,
/// e.g. loaded from checkpoints), evaluates and assembles the report. Writes
/// nothing; meta is left empty.
RunOutcome run_experiment(const ExperimentConfig& cfg, const TaskStream& features,
                          std::vector<ModelState> prior = {});

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code and reports problems on `err`.

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct RunOptions {
  std::filesystem::path config;
  /// Resume from a checkpoint; earlier checkpoints are read from its directory.
  std::optional<std::filesystem::path> resume;
  ConfigOverrides overrides;
  /// Overrides the report file name.
  std::optional<std::string> report;
};

struct ProbeOptions {
  /// Report or checkpoint files; several inputs give paired phi columns.
  std::vector<std::filesystem::path> inputs;
  /// Replaces the configured rho list when non-empty.
  std::vector<double> rhos;
  /// Replaces the configured probe kinds when non-empty.
  std::vector<std::string> kinds;
  std::optional<std::filesystem::path> output;
};

struct FlopsOptions {
  FlopsModel model;
  /// A single regime, or every row of the reference table when empty.
  std::optional<std::string> regime;
  std::string format = "text";
};

struct GridOptions {
  std::filesystem::path config;
  ConfigOverrides overrides;
};

struct ValidateDataOptions {
  std::vector<std::filesystem::path> files;
};

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_probe(const ProbeOptions& opts, std::ostream& out, std::ostream& err);
int cmd_flops(const FlopsOptions& opts, std::ostream& out, std::ostream& err);
int cmd_grid(const GridOptions& opts, std::ostream& out, std::ostream& err);
int cmd_validate_data(const ValidateDataOptions& opts, std::ostream& out, std::ostream& err);

/// Maps the library's error types to exit codes, printing the message.
int exit_code_for_current_exception(std::ostream& err);

/// Rows of the reference cost table: FO, ZO q=1,4, hybrid early/late q=1,4.
std::vector<CostReport> reference_cost_table(const FlopsModel& base);
std::string format_sci(double v, int significant);

}  // namespace zofc
