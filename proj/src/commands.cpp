// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/commands.hpp"

#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "zofc/error.hpp"
#include "zofc/feature_io.hpp"
#include "zofc/kernels.hpp"
#include "zofc/rng.hpp"

namespace zofc {

using Json = nlohmann::ordered_json;

FrozenBackbone make_backbone(const BackboneConfig& cfg, std::size_t input_dim) {
  if (cfg.variant == BackboneVariant::identity) return FrozenBackbone::identity(input_dim);
  return FrozenBackbone::random_affine_stack(input_dim, cfg.widths, cfg.seed);
}

TaskStream build_feature_stream(const ExperimentConfig& cfg) {
  TaskStream raw;
  if (cfg.stream.source == StreamSource::synthetic) {
    raw = make_synthetic_stream(cfg.stream.synthetic);
  } else {
    const LabeledSet train = to_labeled_set(load_features(cfg.stream.train_path));
    const LabeledSet test = to_labeled_set(load_features(cfg.stream.test_path));
    if (train.x.cols() != test.x.cols()) {
      throw DataError(DataErrorKind::inconsistent,
                      "train and test feature files have different dims (" +
                          std::to_string(train.x.cols()) + " vs " +
                          std::to_string(test.x.cols()) + ")");
    }
    raw = stream_from_labeled_sets(train, test, cfg.stream.classes_per_task);
  }
  if (cfg.backbone.variant == BackboneVariant::identity) return raw;
  return cache_features(raw, make_backbone(cfg.backbone, raw.input_dim));
}

ActivationDims activation_dims(const ExperimentConfig& cfg, std::size_t feature_dim) {
  ActivationDims d;
  if (cfg.backbone.variant == BackboneVariant::random_affine_stack) {
    d.backbone_widths = cfg.backbone.widths;
  }
  d.dim = feature_dim;
  d.rank = cfg.training.variant.adapter == ComponentOptimizer::none ? 0 : cfg.training.adapter_rank;
  return d;
}

std::optional<FlopsRegime> cost_regime(const MethodVariant& v) {
  using C = ComponentOptimizer;
  if (v.adapter == C::fo) return FlopsRegime::fo;
  if (v.adapter == C::none) {
    if (v.head == C::fo) return FlopsRegime::fo;
    if (v.head == C::zo) return FlopsRegime::zo;
    return std::nullopt;
  }
  // ZO adapter: a prototype classifier still trains through a temporary FO head.
  if (v.head == C::zo) return FlopsRegime::zo;
  return FlopsRegime::zofc_early;
}

std::vector<FlatnessSample> flatness_at(const TaskStream& features, std::size_t checkpoint,
                                        const ModelState& state, const ProbeConfig& probe) {
  std::vector<FlatnessSample> out;
  if (checkpoint < 2 || state.head.family() == HeadFamily::prototype) return out;
  const StateLoss loss = old_task_loss(features, checkpoint - 1, state, probe.target);
  const Vector theta = loss.parameters();
  if (theta.size() == 0) return out;
  const Vector grad = loss.gradient(theta);
  const ScalarFunction f = std::cref(loss);
  for (double rho : probe.rhos) {
    for (ProbeKind kind : probe.kinds) {
      ProbeSpec spec;
      spec.kind = kind;
      spec.directions = probe.random_directions;
      spec.seed = mix64(probe.seed ^ mix64(checkpoint));
      const auto grad_span = std::span<const double>(grad.span());
      const FlatnessResult r =
          sam_flatness(f, theta, rho, spec,
                       kind == ProbeKind::ascent ? std::optional(grad_span) : std::nullopt);
      out.push_back({checkpoint, checkpoint - 1, rho, kind, r.phi, r.loss, r.loss_plus});
    }
  }
  return out;
}

std::vector<FlatnessSample> flatness_series(const TaskStream& features,
                                            const std::vector<ModelState>& snapshots,
                                            const ProbeConfig& probe, Exec exec) {
  std::vector<std::vector<FlatnessSample>> per(snapshots.size());
  parallel_for(
      snapshots.size(),
      [&](std::size_t i) { per[i] = flatness_at(features, i + 1, snapshots[i], probe); },
      exec);
  std::vector<FlatnessSample> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const TaskStream& features,
                          std::vector<ModelState> prior) {
  cfg.validate();
  features.validate();
  const TrainingConfig& tc = cfg.training;
  StreamRun run = run_stream(features, tc, std::move(prior));
  RunOutcome o;
  o.snapshots = std::move(run.snapshots);

  RunReport& r = o.report;
  r.config = cfg;
  r.matrix = std::move(run.matrix);
  for (std::size_t k = 1; k <= features.tasks.size(); ++k) r.metrics.push_back(metrics_after(r.matrix, k));
  if (cfg.probe.enabled) r.flatness = flatness_series(features, o.snapshots, cfg.probe, tc.exec);
  if (const auto regime = cost_regime(tc.variant)) {
    FlopsModel m;
    m.queries = tc.spsa.queries;
    m.regime = *regime;
    r.cost = flops_estimate(m);
  }
  r.activation_dims = activation_dims(cfg, features.input_dim);
  r.activation_proxy =
      activation_memory_proxy(tc.variant, r.activation_dims, tc.budget.batch_size);
  r.counters = o.snapshots.back().counters;
  return o;
}

// ---------------------------------------------------------------------------
// Shared helpers

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string host_name() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

std::filesystem::path output_dir(const ExperimentConfig& cfg) { return cfg.output.dir; }

/// Writes checkpoints and the report; returns the report path.
std::filesystem::path write_outputs(const ExperimentConfig& cfg, RunOutcome& o, double wall_seconds,
                                    const std::optional<std::filesystem::path>& resumed_from) {
  const auto dir = output_dir(cfg);
  const auto report_path = dir / cfg.output.report;
  const auto report_dir = report_path.parent_path();
  o.report.checkpoints.clear();
  if (cfg.output.checkpoints) {
    const auto ckpt_dir = dir / cfg.output.checkpoint_dir;
    for (std::size_t t = 0; t < o.snapshots.size(); ++t) {
      const auto path = ckpt_dir / checkpoint_file_name(t + 1);
      write_text_file(path, serialize_checkpoint({cfg, o.snapshots[t]}));
      o.report.checkpoints.push_back(
          path.lexically_relative(report_dir.empty() ? "." : report_dir).generic_string());
    }
  }
  Json meta;
  meta["tool"] = "zofc";
  meta["created_utc"] = utc_now();
  meta["host"] = host_name();
  meta["wall_seconds"] = wall_seconds;
  meta["threads"] = max_threads();
  meta["resumed_from"] = resumed_from ? Json(resumed_from->string()) : Json(nullptr);
  o.report.meta = meta;
  write_text_file(report_path, serialize_report(o.report));
  return report_path;
}

void print_summary(std::ostream& out, const RunReport& r, const std::filesystem::path& path) {
  const auto& m = r.metrics.back();
  out << r.config.training.variant.name << ": avg " << shortest(m.avg) << ", last "
      << shortest(m.last);
  if (m.fgt) out << ", fgt " << shortest(*m.fgt);
  out << " -> " << path.string() << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// run

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig cfg;
    std::vector<ModelState> prior;
    if (opts.resume) {
      Checkpoint c = load_checkpoint(*opts.resume);
      cfg = c.config;
      const auto dir = opts.resume->parent_path();
      for (std::size_t t = 1; t < c.state.tasks_done; ++t) {
        prior.push_back(load_checkpoint(dir / checkpoint_file_name(t)).state);
      }
      prior.push_back(std::move(c.state));
    } else {
      cfg = load_config(opts.config);
    }
    apply_overrides(cfg, opts.overrides, std::getenv(kOutputDirEnv));
    if (opts.report) cfg.output.report = *opts.report;
    const TaskStream features = build_feature_stream(cfg);
    const auto start = std::chrono::steady_clock::now();
    RunOutcome o = run_experiment(cfg, features, std::move(prior));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto path = write_outputs(cfg, o, wall, opts.resume);
    print_summary(out, o.report, path);
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

// ---------------------------------------------------------------------------
// grid

int cmd_grid(const GridOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig base = load_config(opts.config);
    apply_overrides(base, opts.overrides, std::getenv(kOutputDirEnv));
    std::vector<std::string> names = base.grid;
    if (names.empty()) {
      for (const auto& v : standard_variants()) names.push_back(v.name);
    }
    const TaskStream features = build_feature_stream(base);
    const std::filesystem::path report(base.output.report);
    for (const auto& name : names) {
      ExperimentConfig cfg = base;
      cfg.grid.clear();
      cfg.training.variant = variant_by_name(name);
      cfg.output.report =
          (report.parent_path() / (report.stem().string() + "-" + name + ".json")).string();
      cfg.output.checkpoint_dir =
          (std::filesystem::path(base.output.checkpoint_dir) / name).string();
      const auto start = std::chrono::steady_clock::now();
      RunOutcome o = run_experiment(cfg, features);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      print_summary(out, o.report, write_outputs(cfg, o, wall, std::nullopt));
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

// ---------------------------------------------------------------------------
// probe

int cmd_probe(const ProbeOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    if (opts.inputs.empty()) throw ConfigError("probe: no report or checkpoint given");
    for (double rho : opts.rhos) {
      if (!(rho > 0.0)) throw ConfigError("probe: rho must be > 0, got " + shortest(rho));
    }
    std::vector<ProbeKind> kinds;
    for (const auto& k : opts.kinds) kinds.push_back(probe_kind_from_string(k));

    using Key = std::tuple<std::size_t, double, std::string>;
    std::map<Key, std::vector<std::optional<double>>> rows;
    std::vector<std::string> labels;
    std::set<std::string> used;

    for (std::size_t idx = 0; idx < opts.inputs.size(); ++idx) {
      const auto& path = opts.inputs[idx];
      const Json doc = [&] {
        try {
          return Json::parse(read_text_file(path));
        } catch (const nlohmann::json::parse_error&) {
          throw DataError(DataErrorKind::inconsistent, path.string() + ": not valid JSON");
        }
      }();
      const std::string kind = doc.is_object() ? doc.value("kind", "") : "";
      ExperimentConfig cfg;
      std::vector<std::pair<std::size_t, ModelState>> states;
      if (kind == "zofc-run-report") {
        const RunReport rep = load_report(path);
        cfg = rep.config;
        if (rep.checkpoints.empty()) {
          throw DataError(DataErrorKind::io, path.string() + ": report lists no checkpoints");
        }
        for (const auto& rel : rep.checkpoints) {
          Checkpoint c = load_checkpoint(path.parent_path() / rel);
          states.emplace_back(c.state.tasks_done, std::move(c.state));
        }
      } else if (kind == "zofc-checkpoint") {
        Checkpoint c = load_checkpoint(path);
        cfg = c.config;
        states.emplace_back(c.state.tasks_done, std::move(c.state));
      } else {
        throw DataError(DataErrorKind::bad_magic,
                        path.string() + ": neither a run report nor a checkpoint");
      }
      ProbeConfig probe = cfg.probe;
      if (!opts.rhos.empty()) probe.rhos = opts.rhos;
      if (!kinds.empty()) probe.kinds = kinds;
      if (probe.rhos.empty()) throw ConfigError("probe: no rho values");

      std::string label = cfg.training.variant.name;
      while (used.count(label)) label += "+";
      used.insert(label);
      labels.push_back(label);

      const TaskStream features = build_feature_stream(cfg);
      std::size_t emitted = 0;
      for (const auto& [t, state] : states) {
        if (t > features.tasks.size()) {
          throw DataError(DataErrorKind::inconsistent,
                          path.string() + ": checkpoint beyond the stream length");
        }
        for (const auto& s : flatness_at(features, t, state, probe)) {
          auto& cells = rows[Key{s.checkpoint, s.rho, std::string(to_string(s.probe))}];
          cells.resize(opts.inputs.size());
          cells[idx] = s.phi;
          ++emitted;
        }
      }
      if (emitted == 0) {
        err << "warning: " << path.string()
            << ": no old-task sets to probe (needs a learnable head and a checkpoint after task 2 or later)\n";
      }
    }

    std::ostringstream csv;
    csv << "task,rho,probe";
    if (labels.size() == 1) {
      csv << ",phi";
    } else {
      for (const auto& l : labels) csv << ",phi_" << l;
    }
    csv << "\n";
    for (auto& [key, cells] : rows) {
      cells.resize(opts.inputs.size());
      csv << std::get<0>(key) << "," << shortest(std::get<1>(key)) << "," << std::get<2>(key);
      for (const auto& c : cells) csv << "," << (c ? shortest(*c) : "");
      csv << "\n";
    }
    if (opts.output) {
      write_text_file(*opts.output, csv.str());
    } else {
      out << csv.str();
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

// ---------------------------------------------------------------------------
// flops

std::string format_sci(double v, int significant) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", significant - 1, v);
  return buf;
}

std::vector<CostReport> reference_cost_table(const FlopsModel& base) {
  std::vector<CostReport> rows;
  const auto add = [&](FlopsRegime r, std::size_t q) {
    FlopsModel m = base;
    m.regime = r;
    m.queries = q;
    rows.push_back(flops_estimate(m));
  };
  add(FlopsRegime::fo, 1);
  add(FlopsRegime::zo, 1);
  add(FlopsRegime::zo, 4);
  add(FlopsRegime::zofc_early, 1);
  add(FlopsRegime::zofc_late, 1);
  add(FlopsRegime::zofc_early, 4);
  add(FlopsRegime::zofc_late, 4);
  return rows;
}

namespace {

Json cost_row_json(const CostReport& c) {
  return Json{{"regime", to_string(c.regime)},
              {"queries", c.queries},
              {"forwards_per_batch", c.forwards_per_batch},
              {"forward_flops", c.forward_flops},
              {"backward_flops", c.backward_flops},
              {"total_flops", c.total_flops},
              {"ratio_vs_fo", c.ratio_vs_fo}};
}

}  // namespace

int cmd_flops(const FlopsOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    std::vector<CostReport> rows;
    if (opts.regime && *opts.regime != "all") {
      FlopsModel m = opts.model;
      m.regime = flops_regime_from_string(*opts.regime);
      rows.push_back(flops_estimate(m));
    } else {
      rows = reference_cost_table(opts.model);
    }
    if (opts.format == "json") {
      Json j;
      j["tokens"] = rows.front().tokens;
      j["adapter_flops_per_image"] = rows.front().adapter_flops_per_image;
      j["head_flops_per_image"] = rows.front().head_flops_per_image;
      j["forward_per_batch"] = opts.model.forward_per_batch;
      Json arr = Json::array();
      for (const auto& r : rows) arr.push_back(cost_row_json(r));
      j["rows"] = arr;
      out << j.dump(2) << "\n";
    } else if (opts.format == "csv") {
      out << "regime,q,forwards,forward_flops,backward_flops,total_flops,ratio_vs_fo\n";
      for (const auto& r : rows) {
        out << to_string(r.regime) << "," << r.queries << "," << r.forwards_per_batch << ","
            << shortest(r.forward_flops) << "," << shortest(r.backward_flops) << ","
            << shortest(r.total_flops) << "," << shortest(r.ratio_vs_fo) << "\n";
      }
    } else if (opts.format == "text") {
      const auto& f = rows.front();
      out << "tokens per image        " << f.tokens << "\n"
          << "adapter FLOPs / image   " << format_sci(f.adapter_flops_per_image, 4) << "\n"
          << "head FLOPs / image      " << format_sci(f.head_flops_per_image, 4) << "\n"
          << "forward FLOPs / batch   " << format_sci(opts.model.forward_per_batch, 4) << "\n\n";
      char line[160];
      std::snprintf(line, sizeof line, "%-11s %3s %-10s %-11s %-11s %-11s %s\n", "regime", "q",
                    "forwards", "forward", "backward", "total", "xFO");
      out << line;
      for (const auto& r : rows) {
        const std::string q = r.regime == FlopsRegime::fo ? "-" : std::to_string(r.queries);
        const std::string fw = r.regime == FlopsRegime::fo
                                   ? "1"
                                   : "2q+" + std::to_string(r.forwards_per_batch - 2 * r.queries) +
                                         "=" + std::to_string(r.forwards_per_batch);
        char ratio[32];
        std::snprintf(ratio, sizeof ratio, "%.2fx", r.ratio_vs_fo);
        std::snprintf(line, sizeof line, "%-11s %3s %-10s %-11s %-11s %-11s %s\n",
                      std::string(to_string(r.regime)).c_str(), q.c_str(), fw.c_str(),
                      format_sci(r.forward_flops, 4).c_str(),
                      r.backward_flops == 0.0 ? "0" : format_sci(r.backward_flops, 4).c_str(),
                      format_sci(r.total_flops, 4).c_str(), ratio);
        out << line;
      }
    } else {
      throw ConfigError("flops: unknown format '" + opts.format + "' (expected text, csv or json)");
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

// ---------------------------------------------------------------------------
// validate-data

int cmd_validate_data(const ValidateDataOptions& opts, std::ostream& out, std::ostream& err) {
  if (opts.files.empty()) {
    err << "config error: validate-data needs at least one file\n";
    return kExitConfig;
  }
  int worst = kExitOk;
  for (const auto& path : opts.files) {
    try {
      const FeatureDataset ds = load_features(path);
      std::set<std::uint32_t> distinct(ds.labels.begin(), ds.labels.end());
      out << path.string() << ": ok, " << ds.size() << " examples, dim " << ds.dim()
          << ", label width " << ds.label_width << ", " << distinct.size() << " distinct labels\n";
    } catch (...) {
      worst = std::max(worst, exit_code_for_current_exception(err));
    }
  }
  return worst;
}

}  // namespace zofc
