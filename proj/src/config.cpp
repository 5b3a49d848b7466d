// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <type_traits>
#include <sstream>

#include "zofc/error.hpp"

namespace zofc {

using Json = nlohmann::ordered_json;

std::string_view to_string(StreamSource s) noexcept {
  return s == StreamSource::synthetic ? "synthetic" : "features";
}

StreamSource stream_source_from_string(std::string_view s) {
  if (s == "synthetic") return StreamSource::synthetic;
  if (s == "features") return StreamSource::features;
  throw ConfigError("unknown stream source '" + std::string(s) +
                    "' (expected synthetic or features)");
}

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: expected " + std::to_string(kConfigSchemaVersion) +
                      ", got " + std::to_string(schema_version));
  }
  if (stream.source == StreamSource::synthetic) {
    stream.synthetic.validate();
  } else {
    if (stream.train_path.empty() || stream.test_path.empty()) {
      throw ConfigError("stream: features source needs train_path and test_path");
    }
    if (stream.classes_per_task == 0) throw ConfigError("stream.classes_per_task: must be >= 1");
  }
  training.validate();
  for (double rho : probe.rhos) {
    if (!(rho > 0.0)) throw ConfigError("probe.rhos: every rho must be > 0");
  }
  if (probe.random_directions == 0) throw ConfigError("probe.random_directions: must be >= 1");
  if (output.report.empty()) throw ConfigError("output.report: must not be empty");
  for (const auto& name : grid) variant_by_name(name);
}

// ---------------------------------------------------------------------------
// Reading with field paths and unknown-key detection

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  ~Reader() = default;

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw ConfigError(field(key) + ": expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError(field(key) + ": expected an array");
      for (const auto& e : v) {
        if (!e.is_number_unsigned()) {
          throw ConfigError(field(key) + ": expected non-negative integers");
        }
      }
    }
    try {
      out = v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + v.type_name() + ")");
    }
    check(key, out);
  }

  template <typename T, typename Conv>
  void get_enum(const char* key, T& out, Conv conv) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    try {
      out = conv(v.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  /// Returns the sub-object (or nullptr if absent) and marks it seen.
  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(field(k.c_str()) + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + ": "; }

  template <typename T>
  void check(const char* key, const T& v) const {
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) throw ConfigError(field(key) + ": must be finite");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      for (double x : v) {
        if (!std::isfinite(x)) throw ConfigError(field(key) + ": entries must be finite");
      }
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_schedule(const Json& j, const std::string& path, LrSchedule& s) {
  Reader r(j, path);
  r.get_enum("kind", s.kind, schedule_kind_from_string);
  r.get("base_lr", s.base_lr);
  r.finish();
}

Json schedule_json(const LrSchedule& s) {
  return Json{{"kind", to_string(s.kind)}, {"base_lr", s.base_lr}};
}

Json variant_json(const MethodVariant& v) {
  return Json{{"name", v.name},
              {"adapter", to_string(v.adapter)},
              {"head_family", to_string(v.head_family)},
              {"head", to_string(v.head)}};
}

MethodVariant read_variant(const Json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return variant_by_name(j.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  MethodVariant v;
  Reader r(j, path);
  r.get("name", v.name);
  r.get_enum("adapter", v.adapter, component_optimizer_from_string);
  r.get_enum("head_family", v.head_family, head_family_from_string);
  r.get_enum("head", v.head, component_optimizer_from_string);
  r.finish();
  if (v.name.empty()) v.name = "custom";
  return v;
}

Exec exec_from_string(std::string_view s) {
  if (s == "serial") return Exec::serial;
  if (s == "parallel") return Exec::parallel;
  throw ConfigError("unknown exec mode '" + std::string(s) + "' (expected serial or parallel)");
}

std::string_view exec_string(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig cfg;
  Reader top(j, "");
  top.get("schema_version", cfg.schema_version);
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: expected " + std::to_string(kConfigSchemaVersion) +
                      ", got " + std::to_string(cfg.schema_version));
  }

  if (const Json* s = top.child("stream")) {
    Reader r(*s, "stream");
    r.get_enum("source", cfg.stream.source, stream_source_from_string);
    if (const Json* syn = r.child("synthetic")) {
      auto& sp = cfg.stream.synthetic;
      Reader rs(*syn, "stream.synthetic");
      rs.get("num_tasks", sp.num_tasks);
      rs.get("classes_per_task", sp.classes_per_task);
      rs.get("dim", sp.dim);
      rs.get("examples_per_class", sp.examples_per_class);
      rs.get("test_examples_per_class", sp.test_examples_per_class);
      rs.get("separation", sp.separation);
      rs.get("noise", sp.noise);
      rs.get("seed", sp.seed);
      rs.finish();
    }
    r.get("train_path", cfg.stream.train_path);
    r.get("test_path", cfg.stream.test_path);
    r.get("classes_per_task", cfg.stream.classes_per_task);
    r.finish();
  }

  if (const Json* b = top.child("backbone")) {
    Reader r(*b, "backbone");
    r.get_enum("variant", cfg.backbone.variant, backbone_variant_from_string);
    r.get("widths", cfg.backbone.widths);
    r.get("seed", cfg.backbone.seed);
    r.finish();
  }

  auto& t = cfg.training;
  if (const Json* v = top.child("variant")) t.variant = read_variant(*v, "variant");

  if (const Json* b = top.child("budget")) {
    Reader r(*b, "budget");
    r.get("head_epochs", t.budget.head_epochs);
    r.get("adapter_epochs", t.budget.adapter_epochs);
    r.get("batch_size", t.budget.batch_size);
    r.finish();
  }

  if (const Json* s = top.child("spsa")) {
    Reader r(*s, "spsa");
    r.get("epsilon", t.spsa.epsilon);
    r.get("queries", t.spsa.queries);
    // null disables clipping.
    if (r.has("clip_threshold") && s->at("clip_threshold").is_null()) {
      r.child("clip_threshold");
      t.spsa.clip_threshold = std::numeric_limits<double>::infinity();
    } else {
      r.get("clip_threshold", t.spsa.clip_threshold);
    }
    r.get_enum("law", t.spsa.law, perturbation_law_from_string);
    r.finish();
  }

  if (const Json* s = top.child("head_schedule")) read_schedule(*s, "head_schedule", t.head_schedule);
  if (const Json* s = top.child("adapter_schedule")) {
    read_schedule(*s, "adapter_schedule", t.adapter_schedule);
  }

  if (const Json* a = top.child("adapter")) {
    Reader r(*a, "adapter");
    r.get("rank", t.adapter_rank);
    r.get("init_scale", t.adapter_init_scale);
    r.finish();
  }
  if (const Json* h = top.child("head")) {
    Reader r(*h, "head");
    r.get("cosine_scale", t.cosine_scale);
    r.finish();
  }
  top.get("seed", t.seed);
  top.get_enum("exec", t.exec, exec_from_string);

  if (const Json* p = top.child("probe")) {
    Reader r(*p, "probe");
    r.get("enabled", cfg.probe.enabled);
    r.get("rhos", cfg.probe.rhos);
    if (const Json* k = r.child("kinds")) {
      if (!k->is_array()) throw ConfigError("probe.kinds: expected an array");
      cfg.probe.kinds.clear();
      for (const auto& e : *k) {
        if (!e.is_string()) throw ConfigError("probe.kinds: expected strings");
        try {
          cfg.probe.kinds.push_back(probe_kind_from_string(e.get<std::string>()));
        } catch (const ConfigError& err) {
          throw ConfigError(std::string("probe.kinds: ") + err.what());
        }
      }
    }
    r.get("random_directions", cfg.probe.random_directions);
    r.get_enum("target", cfg.probe.target, param_target_from_string);
    r.get("seed", cfg.probe.seed);
    r.finish();
  }

  if (const Json* o = top.child("output")) {
    Reader r(*o, "output");
    r.get("dir", cfg.output.dir);
    r.get("report", cfg.output.report);
    r.get("checkpoint_dir", cfg.output.checkpoint_dir);
    r.get("checkpoints", cfg.output.checkpoints);
    r.finish();
  }
  top.get("grid", cfg.grid);
  top.finish();

  cfg.validate();
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  const auto& sp = cfg.stream.synthetic;
  const auto& t = cfg.training;
  Json j;
  j["schema_version"] = cfg.schema_version;
  j["stream"] = Json{{"source", to_string(cfg.stream.source)},
                     {"synthetic",
                      Json{{"num_tasks", sp.num_tasks},
                           {"classes_per_task", sp.classes_per_task},
                           {"dim", sp.dim},
                           {"examples_per_class", sp.examples_per_class},
                           {"test_examples_per_class", sp.test_examples_per_class},
                           {"separation", sp.separation},
                           {"noise", sp.noise},
                           {"seed", sp.seed}}},
                     {"train_path", cfg.stream.train_path},
                     {"test_path", cfg.stream.test_path},
                     {"classes_per_task", cfg.stream.classes_per_task}};
  j["backbone"] = Json{{"variant", to_string(cfg.backbone.variant)},
                       {"widths", cfg.backbone.widths},
                       {"seed", cfg.backbone.seed}};
  j["variant"] = variant_json(t.variant);
  j["budget"] = Json{{"head_epochs", t.budget.head_epochs},
                     {"adapter_epochs", t.budget.adapter_epochs},
                     {"batch_size", t.budget.batch_size}};
  Json clip = std::isinf(t.spsa.clip_threshold) ? Json(nullptr) : Json(t.spsa.clip_threshold);
  j["spsa"] = Json{{"epsilon", t.spsa.epsilon},
                   {"queries", t.spsa.queries},
                   {"clip_threshold", clip},
                   {"law", to_string(t.spsa.law)}};
  j["head_schedule"] = schedule_json(t.head_schedule);
  j["adapter_schedule"] = schedule_json(t.adapter_schedule);
  j["adapter"] = Json{{"rank", t.adapter_rank}, {"init_scale", t.adapter_init_scale}};
  j["head"] = Json{{"cosine_scale", t.cosine_scale}};
  j["seed"] = t.seed;
  j["exec"] = exec_string(t.exec);
  Json kinds = Json::array();
  for (ProbeKind k : cfg.probe.kinds) kinds.push_back(to_string(k));
  j["probe"] = Json{{"enabled", cfg.probe.enabled},
                    {"rhos", cfg.probe.rhos},
                    {"kinds", kinds},
                    {"random_directions", cfg.probe.random_directions},
                    {"target", to_string(cfg.probe.target)},
                    {"seed", cfg.probe.seed}};
  j["output"] = Json{{"dir", cfg.output.dir},
                     {"report", cfg.output.report},
                     {"checkpoint_dir", cfg.output.checkpoint_dir},
                     {"checkpoints", cfg.output.checkpoints}};
  j["grid"] = cfg.grid;
  return j;
}

std::string serialize_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Byte offset -> line and column for the diagnostic.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(std::string(source) + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": JSON syntax error");
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str(), path.string());
  const auto base = path.parent_path();
  for (std::string* p : {&cfg.stream.train_path, &cfg.stream.test_path}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) {
      *p = (base / *p).lexically_normal().string();
    }
  }
  return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& flags,
                     const char* output_dir_env) {
  if (output_dir_env != nullptr && *output_dir_env != '\0') cfg.output.dir = output_dir_env;
  if (flags.output_dir) cfg.output.dir = *flags.output_dir;
  if (flags.seed) cfg.training.seed = *flags.seed;
  if (flags.variant) cfg.training.variant = variant_by_name(*flags.variant);
  if (flags.queries) cfg.training.spsa.queries = *flags.queries;
  if (flags.epsilon) cfg.training.spsa.epsilon = *flags.epsilon;
  if (flags.exec) cfg.training.exec = exec_from_string(*flags.exec);
  if (flags.checkpoints) cfg.output.checkpoints = *flags.checkpoints;
  cfg.validate();
}

}  // namespace zofc
