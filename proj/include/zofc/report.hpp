// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "zofc/config.hpp"
#include "zofc/continual.hpp"
#include "zofc/metrics.hpp"
#include "zofc/oracles.hpp"

namespace zofc {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

/// Flatness of the old-task loss at one checkpoint.
struct FlatnessSample {
  /// 1-based task index the snapshot was taken after.
  std::size_t checkpoint = 0;
  /// Number of earlier tasks whose training data define the old-task loss.
  std::size_t old_tasks = 0;
  double rho = 0.0;
  ProbeKind probe = ProbeKind::ascent;
  double phi = 0.0;
  double loss = 0.0;
  double loss_plus = 0.0;

  friend bool operator==(const FlatnessSample&, const FlatnessSample&) = default;
};

struct RunReport {
  int schema_version = kReportSchemaVersion;
  ExperimentConfig config;
  EvalMatrix matrix;
  /// One entry per checkpoint (after task 1, 2, ..., K).
  std::vector<MetricsReport> metrics;
  std::vector<FlatnessSample> flatness;
  /// Absent for variants that train nothing.
  std::optional<CostReport> cost;
  ActivationDims activation_dims;
  std::uint64_t activation_proxy = 0;
  TrainCounters counters;
  /// Checkpoint files relative to the output directory.
  std::vector<std::string> checkpoints;
  /// Timestamps, host and wall-clock data; excluded from determinism checks.
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

nlohmann::ordered_json report_to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::ordered_json& j);
std::string serialize_report(const RunReport& r);
RunReport parse_report(std::string_view text);
RunReport load_report(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// Structural checks mirroring schemas/run_report.schema.json. Returns one
/// message per violation; empty means valid.
std::vector<std::string> validate_report_json(const nlohmann::ordered_json& j);

/// Serialized report with the meta field removed.
std::string report_without_meta(std::string_view text);

// ---------------------------------------------------------------------------
// Checkpoints
//
// JSON document {schema_version, kind: "zofc-checkpoint", config, state}
// where state holds the adapter and head parameters, class ids, centroids,
// tasks_done, every trainer RNG stream (name, seed, counter) and the
// counters. Doubles are written with round-trip precision, so resuming
// reproduces the original run bit for bit.

struct Checkpoint {
  ExperimentConfig config;
  ModelState state;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

nlohmann::ordered_json state_to_json(const ModelState& s);
ModelState state_from_json(const nlohmann::ordered_json& j);
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(std::string_view text);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// "task-NN.json" for the snapshot after task `task` (1-based).
std::string checkpoint_file_name(std::size_t task);

}  // namespace zofc
