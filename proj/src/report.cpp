// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zofc/error.hpp"

namespace zofc {

using Json = nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

std::uint64_t parse_hex64(const Json& j) {
  const auto s = j.get<std::string>();
  if (s.size() != 18 || s.rfind("0x", 0) != 0) {
    throw DataError(DataErrorKind::inconsistent, "bad hex digest '" + s + "'");
  }
  return std::stoull(s.substr(2), nullptr, 16);
}

Json counters_json(const TrainCounters& c) {
  return Json{{"fo_steps", c.fo_steps},
              {"zo_steps", c.zo_steps},
              {"loss_evaluations", c.loss_evaluations},
              {"clipped_steps", c.clipped_steps},
              {"perturbation_records", c.perturbation_records},
              {"perturbation_digest", hex64(c.perturbation_digest)}};
}

TrainCounters counters_from(const Json& j) {
  TrainCounters c;
  c.fo_steps = j.at("fo_steps").get<std::uint64_t>();
  c.zo_steps = j.at("zo_steps").get<std::uint64_t>();
  c.loss_evaluations = j.at("loss_evaluations").get<std::uint64_t>();
  c.clipped_steps = j.at("clipped_steps").get<std::uint64_t>();
  c.perturbation_records = j.at("perturbation_records").get<std::uint64_t>();
  c.perturbation_digest = parse_hex64(j.at("perturbation_digest"));
  return c;
}

Json cost_json(const CostReport& c) {
  return Json{{"regime", to_string(c.regime)},
              {"queries", c.queries},
              {"tokens", c.tokens},
              {"adapter_flops_per_image", c.adapter_flops_per_image},
              {"head_flops_per_image", c.head_flops_per_image},
              {"forwards_per_batch", c.forwards_per_batch},
              {"forward_flops", c.forward_flops},
              {"backward_flops", c.backward_flops},
              {"total_flops", c.total_flops},
              {"ratio_vs_fo", c.ratio_vs_fo}};
}

CostReport cost_from(const Json& j) {
  CostReport c;
  c.regime = flops_regime_from_string(j.at("regime").get<std::string>());
  c.queries = j.at("queries").get<std::size_t>();
  c.tokens = j.at("tokens").get<std::size_t>();
  c.adapter_flops_per_image = j.at("adapter_flops_per_image").get<double>();
  c.head_flops_per_image = j.at("head_flops_per_image").get<double>();
  c.forwards_per_batch = j.at("forwards_per_batch").get<std::size_t>();
  c.forward_flops = j.at("forward_flops").get<double>();
  c.backward_flops = j.at("backward_flops").get<double>();
  c.total_flops = j.at("total_flops").get<double>();
  c.ratio_vs_fo = j.at("ratio_vs_fo").get<double>();
  return c;
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorKind::inconsistent, std::string(what) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(DataErrorKind::inconsistent, std::string(what) + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DataError(DataErrorKind::inconsistent, std::string(what) + ": " + e.what());
  }
}

Json stream_json(const RngStream& s) {
  return Json{{"name", s.name()}, {"seed", s.seed()}, {"counter", s.counter()}};
}

RngStream stream_from(const Json& j) {
  return RngStream(j.at("name").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                   j.at("counter").get<std::uint64_t>());
}

}  // namespace

// ---------------------------------------------------------------------------
// Reports

Json report_to_json(const RunReport& r) {
  Json j;
  j["schema_version"] = r.schema_version;
  j["kind"] = "zofc-run-report";
  j["config"] = config_to_json(r.config);
  j["eval_matrix"] = r.matrix.rows();
  Json metrics = Json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back(Json{{"after_task", m.tasks},
                           {"avg", m.avg},
                           {"last", m.last},
                           {"fgt", m.fgt ? Json(*m.fgt) : Json(nullptr)}});
  }
  j["metrics"] = metrics;
  Json flat = Json::array();
  for (const auto& f : r.flatness) {
    flat.push_back(Json{{"checkpoint", f.checkpoint},
                        {"old_tasks", f.old_tasks},
                        {"rho", f.rho},
                        {"probe", to_string(f.probe)},
                        {"phi", f.phi},
                        {"loss", f.loss},
                        {"loss_plus", f.loss_plus}});
  }
  j["flatness"] = flat;
  j["cost"] = Json{{"flops", r.cost ? cost_json(*r.cost) : Json(nullptr)},
                   {"activation_dims", Json{{"backbone_widths", r.activation_dims.backbone_widths},
                                            {"dim", r.activation_dims.dim},
                                            {"rank", r.activation_dims.rank}}},
                   {"activation_proxy", r.activation_proxy}};
  j["runtime"] = counters_json(r.counters);
  j["checkpoints"] = r.checkpoints;
  j["meta"] = r.meta;
  return j;
}

RunReport report_from_json(const Json& j) {
  const auto problems = validate_report_json(j);
  if (!problems.empty()) {
    throw DataError(DataErrorKind::inconsistent, "invalid report: " + problems.front());
  }
  return guarded("report", [&] {
    RunReport r;
    r.schema_version = j.at("schema_version").get<int>();
    r.config = config_from_json(j.at("config"));
    r.matrix = EvalMatrix::from_rows(j.at("eval_matrix").get<std::vector<std::vector<double>>>());
    for (const auto& m : j.at("metrics")) {
      MetricsReport mr;
      mr.tasks = m.at("after_task").get<std::size_t>();
      mr.avg = m.at("avg").get<double>();
      mr.last = m.at("last").get<double>();
      if (!m.at("fgt").is_null()) mr.fgt = m.at("fgt").get<double>();
      r.metrics.push_back(mr);
    }
    for (const auto& f : j.at("flatness")) {
      FlatnessSample s;
      s.checkpoint = f.at("checkpoint").get<std::size_t>();
      s.old_tasks = f.at("old_tasks").get<std::size_t>();
      s.rho = f.at("rho").get<double>();
      s.probe = probe_kind_from_string(f.at("probe").get<std::string>());
      s.phi = f.at("phi").get<double>();
      s.loss = f.at("loss").get<double>();
      s.loss_plus = f.at("loss_plus").get<double>();
      r.flatness.push_back(s);
    }
    const Json& cost = j.at("cost");
    if (!cost.at("flops").is_null()) r.cost = cost_from(cost.at("flops"));
    const Json& dims = cost.at("activation_dims");
    r.activation_dims.backbone_widths = dims.at("backbone_widths").get<std::vector<std::size_t>>();
    r.activation_dims.dim = dims.at("dim").get<std::size_t>();
    r.activation_dims.rank = dims.at("rank").get<std::size_t>();
    r.activation_proxy = cost.at("activation_proxy").get<std::uint64_t>();
    r.counters = counters_from(j.at("runtime"));
    r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
    r.meta = j.at("meta");
    return r;
  });
}

std::string serialize_report(const RunReport& r) { return report_to_json(r).dump(2) + "\n"; }

RunReport parse_report(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(DataErrorKind::inconsistent, std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

RunReport load_report(const std::filesystem::path& path) {
  try {
    return parse_report(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError(DataErrorKind::io, "error writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void require(std::vector<std::string>& out, const Json& j, const char* key, bool ok,
             const char* what) {
  if (!j.contains(key)) {
    out.push_back(std::string("missing field '") + key + "'");
  } else if (!ok) {
    out.push_back(std::string("field '") + key + "' must be " + what);
  }
}

}  // namespace

std::vector<std::string> validate_report_json(const Json& j) {
  std::vector<std::string> p;
  if (!j.is_object()) return {"report must be a JSON object"};
  const auto has = [&](const char* k) { return j.contains(k); };
  require(p, j, "schema_version", has("schema_version") && j["schema_version"] == kReportSchemaVersion,
          "the supported schema version");
  require(p, j, "kind", has("kind") && j["kind"] == "zofc-run-report", "\"zofc-run-report\"");
  require(p, j, "config", has("config") && j["config"].is_object(), "an object");
  require(p, j, "eval_matrix", has("eval_matrix") && j["eval_matrix"].is_array(), "an array");
  require(p, j, "metrics", has("metrics") && j["metrics"].is_array(), "an array");
  require(p, j, "flatness", has("flatness") && j["flatness"].is_array(), "an array");
  require(p, j, "cost", has("cost") && j["cost"].is_object(), "an object");
  require(p, j, "runtime", has("runtime") && j["runtime"].is_object(), "an object");
  require(p, j, "checkpoints", has("checkpoints") && j["checkpoints"].is_array(), "an array");
  require(p, j, "meta", has("meta") && j["meta"].is_object(), "an object");
  if (!p.empty()) return p;

  const Json& a = j["eval_matrix"];
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_array() || a[i].size() != i + 1) {
      p.push_back("eval_matrix row " + std::to_string(i) + " must have " + std::to_string(i + 1) +
                  " entries");
      continue;
    }
    for (const auto& v : a[i]) {
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 100.0) {
        p.push_back("eval_matrix row " + std::to_string(i) + " has an entry outside [0, 100]");
      }
    }
  }
  const Json& m = j["metrics"];
  if (m.size() != a.size()) p.push_back("metrics must have one entry per eval_matrix row");
  for (const auto& e : m) {
    if (!e.is_object() || !e.contains("after_task") || !e.contains("avg") || !e.contains("last") ||
        !e.contains("fgt") || !(e["fgt"].is_null() || e["fgt"].is_number())) {
      p.push_back("metrics entries need after_task, avg, last and fgt (number or null)");
      break;
    }
  }
  for (const auto& e : j["flatness"]) {
    bool ok = e.is_object();
    for (const char* k : {"checkpoint", "old_tasks", "rho", "phi", "loss", "loss_plus"}) {
      ok = ok && e.contains(k) && e[k].is_number();
    }
    ok = ok && e.contains("probe") && (e["probe"] == "ascent" || e["probe"] == "random");
    if (!ok) {
      p.push_back("flatness entries need numeric checkpoint, old_tasks, rho, phi, loss, "
                  "loss_plus and probe ascent|random");
      break;
    }
  }
  const Json& c = j["cost"];
  if (!c.contains("flops") || !(c["flops"].is_null() || c["flops"].is_object())) {
    p.push_back("cost.flops must be an object or null");
  }
  if (!c.contains("activation_proxy") || !c["activation_proxy"].is_number_unsigned()) {
    p.push_back("cost.activation_proxy must be a non-negative integer");
  }
  if (!c.contains("activation_dims") || !c["activation_dims"].is_object()) {
    p.push_back("cost.activation_dims must be an object");
  }
  const Json& rt = j["runtime"];
  for (const char* k : {"fo_steps", "zo_steps", "loss_evaluations", "clipped_steps",
                        "perturbation_records"}) {
    if (!rt.contains(k) || !rt[k].is_number_unsigned()) {
      p.push_back(std::string("runtime.") + k + " must be a non-negative integer");
    }
  }
  if (!rt.contains("perturbation_digest") || !rt["perturbation_digest"].is_string()) {
    p.push_back("runtime.perturbation_digest must be a hex string");
  }
  for (const auto& e : j["checkpoints"]) {
    if (!e.is_string()) p.push_back("checkpoints must be strings");
  }
  return p;
}

std::string report_without_meta(std::string_view text) {
  Json j = Json::parse(text);
  j.erase("meta");
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Checkpoints

Json state_to_json(const ModelState& s) {
  const auto& h = s.head;
  std::vector<std::vector<double>> centroids;
  std::vector<bool> built;
  for (std::size_t r = 0; r < h.num_classes(); ++r) {
    const auto row = h.centroids().row(r);
    centroids.emplace_back(row.begin(), row.end());
    built.push_back(h.centroid_built(r));
  }
  const auto& adapter_values = s.adapter.params().values();
  const auto& head_values = h.params().values();
  return Json{
      {"adapter",
       Json{{"dim", s.adapter.dim()},
            {"rank", s.adapter.rank()},
            {"params", std::vector<double>(adapter_values.begin(), adapter_values.end())}}},
      {"head",
       Json{{"family", to_string(h.family())},
            {"dim", h.dim()},
            {"cosine_scale", h.cosine_scale()},
            {"class_ids", h.class_ids()},
            {"weights", std::vector<double>(head_values.begin(), head_values.end())},
            {"centroids", centroids},
            {"centroid_built", built}}},
      {"tasks_done", s.tasks_done},
      {"streams", Json{{"shuffle", stream_json(s.streams.shuffle)},
                       {"head_init", stream_json(s.streams.head_init)},
                       {"zo_adapter", stream_json(s.streams.zo_adapter)},
                       {"zo_head", stream_json(s.streams.zo_head)}}},
      {"counters", counters_json(s.counters)}};
}

ModelState state_from_json(const Json& j) {
  return guarded("checkpoint state", [&] {
    ModelState s;
    const Json& a = j.at("adapter");
    s.adapter = Adapter(a.at("dim").get<std::size_t>(), a.at("rank").get<std::size_t>());
    const auto ap = a.at("params").get<std::vector<double>>();
    require_same_size(ap.size(), s.adapter.params().size(), "checkpoint adapter params");
    std::copy(ap.begin(), ap.end(), s.adapter.params().values().begin());

    const Json& h = j.at("head");
    s.head = ClassifierHead(head_family_from_string(h.at("family").get<std::string>()),
                            h.at("dim").get<std::size_t>(), h.at("cosine_scale").get<double>());
    const auto ids = h.at("class_ids").get<std::vector<int>>();
    RngStream unused("checkpoint-restore", 0);
    s.head.register_classes(ids, unused);
    const auto w = h.at("weights").get<std::vector<double>>();
    require_same_size(w.size(), s.head.params().size(), "checkpoint head weights");
    std::copy(w.begin(), w.end(), s.head.params().values().begin());
    const auto centroids = h.at("centroids").get<std::vector<std::vector<double>>>();
    const auto built = h.at("centroid_built").get<std::vector<bool>>();
    require_same_size(centroids.size(), ids.size(), "checkpoint centroids");
    require_same_size(built.size(), ids.size(), "checkpoint centroid flags");
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (built[r]) s.head.set_centroid(r, centroids[r]);
    }

    s.tasks_done = j.at("tasks_done").get<std::size_t>();
    const Json& st = j.at("streams");
    s.streams.shuffle = stream_from(st.at("shuffle"));
    s.streams.head_init = stream_from(st.at("head_init"));
    s.streams.zo_adapter = stream_from(st.at("zo_adapter"));
    s.streams.zo_head = stream_from(st.at("zo_head"));
    s.counters = counters_from(j.at("counters"));
    return s;
  });
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Json j{{"schema_version", kCheckpointSchemaVersion},
         {"kind", "zofc-checkpoint"},
         {"config", config_to_json(c.config)},
         {"state", state_to_json(c.state)}};
  return j.dump(2) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(DataErrorKind::inconsistent, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != "zofc-checkpoint") {
    throw DataError(DataErrorKind::bad_magic, "not a checkpoint document");
  }
  if (j.value("schema_version", 0) != kCheckpointSchemaVersion) {
    throw DataError(DataErrorKind::version_mismatch, "unsupported checkpoint schema version");
  }
  Checkpoint c;
  c.config = guarded("checkpoint config", [&] { return config_from_json(j.at("config")); });
  c.state = state_from_json(j.at("state"));
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

std::string checkpoint_file_name(std::size_t task) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task-%02zu.json", task);
  return buf;
}

}  // namespace zofc
