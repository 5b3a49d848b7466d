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
#include "zofc/continual.hpp"
#include "zofc/metrics.hpp"
#include "zofc/model.hpp"

namespace zofc {

inline constexpr int kConfigSchemaVersion = 1;

enum class StreamSource { synthetic, features };

std::string_view to_string(StreamSource s) noexcept;
StreamSource stream_source_from_string(std::string_view s);

struct StreamConfig {
  StreamSource source = StreamSource::synthetic;
  SyntheticStreamSpec synthetic;
  /// Feature files, resolved relative to the config file's directory.
  std::string train_path;
  std::string test_path;
  std::size_t classes_per_task = 2;

  friend bool operator==(const StreamConfig&, const StreamConfig&) = default;
};

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::identity;
  std::vector<std::size_t> widths;
  std::uint64_t seed = 0;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct ProbeConfig {
  bool enabled = true;
  std::vector<double> rhos{0.01, 0.05};
  std::vector<ProbeKind> kinds{ProbeKind::ascent, ProbeKind::random};
  std::size_t random_directions = 8;
  ParamTarget target = ParamTarget::all;
  std::uint64_t seed = 0;

  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

struct OutputConfig {
  /// Directory for every output file; relative paths resolve against the
  /// working directory.
  std::string dir = ".";
  std::string report = "report.json";
  /// Written under `dir` as <checkpoint_dir>/task-NN.json when enabled.
  std::string checkpoint_dir = "checkpoints";
  bool checkpoints = true;

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  StreamConfig stream;
  BackboneConfig backbone;
  /// Variant, budget, SPSA, schedules, adapter/head shapes, seed and exec.
  TrainingConfig training;
  ProbeConfig probe;
  OutputConfig output;
  /// Variant names for the grid command; empty means all seven standard ones.
  std::vector<std::string> grid;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates. Syntax errors name line and column; semantic errors
/// name the dotted field path. Unknown fields are rejected.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
std::string serialize_config(const ExperimentConfig& cfg);

/// Command-line overrides, applied on top of the parsed file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> queries;
  std::optional<double> epsilon;
  std::optional<std::string> exec;
  std::optional<std::string> output_dir;
  std::optional<bool> checkpoints;
};

inline constexpr const char* kOutputDirEnv = "ZOFC_OUTPUT_DIR";

/// Precedence: flags > environment (output dir only) > config file > defaults.
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& flags,
                     const char* output_dir_env);

}  // namespace zofc
