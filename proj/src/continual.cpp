// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/continual.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace zofc {

// ---------------------------------------------------------------------------
// Streams

void TaskStream::validate() const {
  if (tasks.empty()) throw ConfigError("TaskStream: no tasks");
  std::set<int> seen;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    const std::string where = "TaskStream task " + std::to_string(t);
    if (task.classes.empty()) throw DataError(DataErrorKind::inconsistent, where + ": no classes");
    for (const LabeledSet* set : {&task.train, &task.test}) {
      require_same_size(set->x.rows(), set->y.size(), where + " labels");
      if (set->x.rows() > 0) require_same_size(set->x.cols(), input_dim, where + " width");
    }
    for (int c : task.classes) {
      if (!seen.insert(c).second) {
        throw DataError(DataErrorKind::inconsistent,
                        where + ": class " + std::to_string(c) + " appears in an earlier task");
      }
      const auto in = [c](const LabeledSet& s) {
        return std::find(s.y.begin(), s.y.end(), c) != s.y.end();
      };
      if (!in(task.train) || !in(task.test)) {
        throw DataError(DataErrorKind::inconsistent,
                        where + ": class " + std::to_string(c) + " needs train and test examples");
      }
    }
    for (const LabeledSet* set : {&task.train, &task.test}) {
      for (int y : set->y) {
        if (std::find(task.classes.begin(), task.classes.end(), y) == task.classes.end()) {
          throw DataError(DataErrorKind::inconsistent,
                          where + ": label " + std::to_string(y) + " is not one of its classes");
        }
      }
    }
  }
}

void SyntheticStreamSpec::validate() const {
  if (num_tasks < 1 || classes_per_task < 1 || dim < 1 || examples_per_class < 1 ||
      test_examples_per_class < 1) {
    throw ConfigError("synthetic stream: all counts must be >= 1");
  }
  if (!(separation >= 0.0) || !(noise >= 0.0)) {
    throw ConfigError("synthetic stream: separation and noise must be non-negative");
  }
}

TaskStream make_synthetic_stream(const SyntheticStreamSpec& spec) {
  spec.validate();
  const std::size_t classes = spec.num_tasks * spec.classes_per_task;
  RngStream mean_stream("synthetic-means", spec.seed);
  std::vector<Vector> means;
  for (std::size_t c = 0; c < classes; ++c) {
    Vector m = gaussian(spec.dim, mean_stream);
    m *= spec.separation / norm2(m);
    means.push_back(std::move(m));
  }
  RngStream samples("synthetic-samples", spec.seed);
  TaskStream stream;
  stream.input_dim = spec.dim;
  for (std::size_t t = 0; t < spec.num_tasks; ++t) {
    Task task;
    task.train.x = Matrix(0, spec.dim);
    task.test.x = Matrix(0, spec.dim);
    for (std::size_t k = 0; k < spec.classes_per_task; ++k) {
      const int id = static_cast<int>(t * spec.classes_per_task + k);
      task.classes.push_back(id);
      RngStream cs = samples.derive("class", static_cast<std::uint64_t>(id));
      const auto draw = [&](LabeledSet& set, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          Vector x = gaussian(spec.dim, cs);
          x *= spec.noise;
          x += means[static_cast<std::size_t>(id)];
          set.x.append_row(x.span());
          set.y.push_back(id);
        }
      };
      draw(task.train, spec.examples_per_class);
      draw(task.test, spec.test_examples_per_class);
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

TaskStream stream_from_labeled_sets(const LabeledSet& train, const LabeledSet& test,
                                    std::size_t classes_per_task) {
  if (classes_per_task == 0) throw ConfigError("classes_per_task must be >= 1");
  require_same_size(train.x.rows(), train.y.size(), "train labels");
  require_same_size(test.x.rows(), test.y.size(), "test labels");
  if (train.size() == 0) throw DataError(DataErrorKind::inconsistent, "empty training set");
  if (test.size() > 0) require_same_size(test.x.cols(), train.x.cols(), "train/test width");
  const std::set<int> classes(train.y.begin(), train.y.end());
  std::map<int, std::size_t> task_of;
  std::size_t idx = 0;
  for (int c : classes) task_of[c] = idx++ / classes_per_task;
  const std::size_t num_tasks = (classes.size() + classes_per_task - 1) / classes_per_task;

  TaskStream stream;
  stream.input_dim = train.x.cols();
  stream.tasks.resize(num_tasks);
  for (auto& t : stream.tasks) {
    t.train.x = Matrix(0, stream.input_dim);
    t.test.x = Matrix(0, stream.input_dim);
  }
  for (int c : classes) stream.tasks[task_of[c]].classes.push_back(c);
  for (std::size_t r = 0; r < train.size(); ++r) {
    auto& t = stream.tasks[task_of[train.y[r]]];
    t.train.x.append_row(train.x.row(r));
    t.train.y.push_back(train.y[r]);
  }
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto it = task_of.find(test.y[r]);
    if (it == task_of.end()) {
      throw DataError(DataErrorKind::inconsistent, "test row " + std::to_string(r) + " has label " +
                                                       std::to_string(test.y[r]) +
                                                       " absent from the training set");
    }
    auto& t = stream.tasks[it->second];
    t.test.x.append_row(test.x.row(r));
    t.test.y.push_back(test.y[r]);
  }
  stream.validate();
  return stream;
}

TaskStream cache_features(const TaskStream& stream, const FrozenBackbone& backbone) {
  require_same_size(stream.input_dim, backbone.input_dim(), "cache_features backbone input");
  TaskStream out;
  out.input_dim = backbone.output_dim();
  for (const Task& t : stream.tasks) {
    Task c;
    c.classes = t.classes;
    c.train = {backbone.forward_batch(t.train.x), t.train.y};
    c.test = {backbone.forward_batch(t.test.x), t.test.y};
    out.tasks.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variants and configuration

std::string_view to_string(ComponentOptimizer o) noexcept {
  switch (o) {
    case ComponentOptimizer::none: return "none";
    case ComponentOptimizer::fo: return "fo";
    case ComponentOptimizer::zo: return "zo";
  }
  return "?";
}

ComponentOptimizer component_optimizer_from_string(std::string_view s) {
  if (s == "none") return ComponentOptimizer::none;
  if (s == "fo" || s == "FO") return ComponentOptimizer::fo;
  if (s == "zo" || s == "ZO") return ComponentOptimizer::zo;
  throw ConfigError("unknown component optimizer '" + std::string(s) + "'");
}

void MethodVariant::validate() const {
  if (head_family == HeadFamily::prototype && head != ComponentOptimizer::none) {
    throw ConfigError("variant '" + name + "': a prototype head has no optimizer");
  }
  if (head_family != HeadFamily::prototype && head == ComponentOptimizer::none) {
    throw ConfigError("variant '" + name + "': a learnable head needs an optimizer");
  }
}

MethodVariant zofc_variant() {
  return {"zofc", ComponentOptimizer::zo, HeadFamily::cosine, ComponentOptimizer::fo};
}

std::vector<MethodVariant> standard_variants() {
  using O = ComponentOptimizer;
  return {
      {"prototype", O::none, HeadFamily::prototype, O::none},
      {"learnable-cls", O::none, HeadFamily::cosine, O::fo},
      {"fo-adapter-fo-cls", O::fo, HeadFamily::cosine, O::fo},
      {"zo-adapter-zo-cls", O::zo, HeadFamily::cosine, O::zo},
      zofc_variant(),
      {"fo-adapter-zo-cls", O::fo, HeadFamily::cosine, O::zo},
      {"zo-adapter-prototype", O::zo, HeadFamily::prototype, O::none},
  };
}

MethodVariant variant_by_name(std::string_view name) {
  for (auto& v : standard_variants()) {
    if (v.name == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

void TrainBudget::validate() const {
  if (head_epochs == 0 && adapter_epochs == 0) throw ConfigError("budget: no epochs at all");
  if (batch_size == 0) throw ConfigError("budget: batch size must be >= 1");
}

void TrainingConfig::validate() const {
  variant.validate();
  budget.validate();
  spsa.validate();
  for (const auto* s : {&head_schedule, &adapter_schedule}) {
    if (!(s->base_lr >= 0.0) || !std::isfinite(s->base_lr)) {
      throw ConfigError("learning rates must be finite and non-negative");
    }
  }
  if (variant.adapter != ComponentOptimizer::none && adapter_rank == 0) {
    throw ConfigError("adapter rank must be >= 1 when the adapter is trained");
  }
  if (!(cosine_scale > 0.0)) throw ConfigError("cosine scale must be positive");
}

ModelState initial_state(const TrainingConfig& cfg, std::size_t feature_dim) {
  cfg.validate();
  ModelState s;
  const bool adapter_on = cfg.variant.adapter != ComponentOptimizer::none;
  s.adapter = Adapter(feature_dim, adapter_on ? cfg.adapter_rank : 0);
  if (adapter_on) {
    RngStream init("adapter-init", cfg.seed);
    s.adapter.init_lora(init, cfg.adapter_init_scale);
  }
  s.head = ClassifierHead(cfg.variant.head_family, feature_dim, cfg.cosine_scale);
  s.streams.shuffle = RngStream("shuffle", cfg.seed);
  s.streams.head_init = RngStream("head-init", cfg.seed);
  s.streams.zo_adapter = RngStream("zo-adapter", cfg.seed);
  s.streams.zo_head = RngStream("zo-head", cfg.seed);
  return s;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void record_digest(TrainCounters& c, const ZoStepResult& r) {
  for (const auto& rec : r.records) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &rec.projected_grad, sizeof bits);
    const std::uint64_t h = mix64(rec.seed ^ mix64(rec.step ^ mix64(rec.query ^ mix64(bits))));
    c.perturbation_digest = (c.perturbation_digest ^ h) * 0x100000001B3ULL;
    ++c.perturbation_records;
  }
  ++c.zo_steps;
  c.loss_evaluations += 2 * r.records.size();
  if (r.clipped) ++c.clipped_steps;
}

void shuffle(std::vector<std::size_t>& order, RngStream& stream) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = stream.next_below(i);
    std::swap(order[i - 1], order[j]);
  }
}

std::vector<std::size_t> targets_for(const LabeledSet& set, const ClassifierHead& head) {
  std::vector<std::size_t> t(set.size());
  for (std::size_t r = 0; r < set.size(); ++r) t[r] = head.row_of(set.y[r]);
  return t;
}

/// Shared per-batch loop. (i) head step, then (ii) adapter step, each only
/// while its epoch budget lasts.
void train_components(const Task& task, ModelState& state, ClassifierHead& head,
                      ComponentOptimizer adapter_opt, ComponentOptimizer head_opt,
                      const TrainingConfig& cfg, std::size_t task_index,
                      const ZoObserver& observer) {
  const LabeledSet& train = task.train;
  const std::size_t n = train.size();
  if (n == 0) throw DataError(DataErrorKind::inconsistent, "task has no training rows");
  const std::size_t bsz = std::min(cfg.budget.batch_size, n);
  const std::size_t batches = (n + bsz - 1) / bsz;
  const std::size_t head_epochs = head_opt == ComponentOptimizer::none ? 0 : cfg.budget.head_epochs;
  const std::size_t adapter_epochs =
      adapter_opt == ComponentOptimizer::none ? 0 : cfg.budget.adapter_epochs;
  const std::size_t epochs = std::max(head_epochs, adapter_epochs);

  LrSchedule head_sched = cfg.head_schedule;
  head_sched.total_steps = std::max<std::size_t>(1, head_epochs * batches);
  LrSchedule adapter_sched = cfg.adapter_schedule;
  adapter_sched.total_steps = std::max<std::size_t>(1, adapter_epochs * batches);

  const std::vector<std::size_t> all_targets = targets_for(train, head);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> rows, targets;
  std::size_t head_t = 0, adapter_t = 0;
  Adapter& adapter = state.adapter;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, state.streams.shuffle);
    for (std::size_t b = 0; b < batches; ++b) {
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(b * bsz),
                  order.begin() + static_cast<std::ptrdiff_t>(std::min(n, (b + 1) * bsz)));
      targets.resize(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) targets[k] = all_targets[rows[k]];
      const BatchView batch{&train.x, rows, targets};
      try {
        if (epoch < head_epochs) {
          const double lr = lr_at(head_sched, head_t++);
          Vector& psi = head.params().values();
          if (head_opt == ComponentOptimizer::fo) {
            const auto g = loss_and_gradients(train.x, rows, targets, adapter.view(), head.view(),
                                              true, false);
            psi = fo_sgd_step(g.head, psi, lr);
            ++state.counters.fo_steps;
            ++state.counters.loss_evaluations;
          } else {
            HeadView hv = head.view();
            const AdapterView av = adapter.view();
            const auto loss = [&batch, av, hv](std::span<const double> w) {
              HeadView probe = hv;
              probe.weights = w;
              return batch_loss_serial(batch, av, probe);
            };
            const auto r = zo_sgd_step(loss, psi, cfg.spsa, lr, state.streams.zo_head, cfg.exec);
            record_digest(state.counters, r);
            if (observer) observer("head", r);
          }
        }
        if (epoch < adapter_epochs) {
          const double lr = lr_at(adapter_sched, adapter_t++);
          Vector& phi = adapter.params().values();
          if (adapter_opt == ComponentOptimizer::fo) {
            const auto g = loss_and_gradients(train.x, rows, targets, adapter.view(), head.view(),
                                              false, true);
            phi = fo_sgd_step(g.adapter, phi, lr);
            ++state.counters.fo_steps;
            ++state.counters.loss_evaluations;
          } else {
            const AdapterView av = adapter.view();
            const HeadView hv = head.view();
            const auto loss = [&batch, av, hv](std::span<const double> p) {
              AdapterView probe = av;
              probe.params = p;
              return batch_loss_serial(batch, probe, hv);
            };
            const auto r = zo_sgd_step(loss, phi, cfg.spsa, lr, state.streams.zo_adapter, cfg.exec);
            record_digest(state.counters, r);
            if (observer) observer("adapter", r);
          }
        }
      } catch (const NumericError& e) {
        throw NumericError("task " + std::to_string(task_index) + ", epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
    }
  }
}

Matrix adapted_features(const Matrix& x, const Adapter& adapter) {
  Matrix z(x.rows(), adapter.dim());
  Vector mid(adapter.rank());
  for (std::size_t r = 0; r < x.rows(); ++r) adapter_forward_into(adapter.view(), x.row(r), z.row(r), mid.span());
  return z;
}

}  // namespace

void train_task_zofc(const Task& task, ModelState& state, const TrainingConfig& cfg,
                     const ZoObserver& observer) {
  cfg.validate();
  if (cfg.variant.adapter != ComponentOptimizer::zo || cfg.variant.head != ComponentOptimizer::fo ||
      cfg.variant.head_family == HeadFamily::prototype) {
    throw ConfigError("train_task_zofc: needs a ZO adapter and an FO learnable head");
  }
  for (int c : task.classes) {
    if (!state.head.has_class(c)) {
      throw ConfigError("train_task_zofc: class " + std::to_string(c) + " is not registered");
    }
  }
  train_components(task, state, state.head, ComponentOptimizer::zo, ComponentOptimizer::fo, cfg,
                   state.tasks_done, observer);
}

void train_task_variant(const Task& task, ModelState& state, const TrainingConfig& cfg,
                        const ZoObserver& observer) {
  cfg.validate();
  const MethodVariant& v = cfg.variant;
  state.head.register_classes(task.classes, state.streams.head_init);

  if (v.adapter_with_prototypes()) {
    // Temporary FO head over this task's classes only, discarded afterwards.
    ClassifierHead temp(HeadFamily::cosine, state.head.dim(), cfg.cosine_scale);
    temp.register_classes(task.classes, state.streams.head_init);
    train_components(task, state, temp, v.adapter, ComponentOptimizer::fo, cfg, state.tasks_done,
                     observer);
  } else if (v.head_family != HeadFamily::prototype) {
    if (v.adapter == ComponentOptimizer::zo && v.head == ComponentOptimizer::fo) {
      train_task_zofc(task, state, cfg, observer);
      ++state.tasks_done;
      return;
    }
    train_components(task, state, state.head, v.adapter, v.head, cfg, state.tasks_done, observer);
  }

  if (v.head_family == HeadFamily::prototype) {
    build_prototypes(adapted_features(task.train.x, state.adapter), task.train.y, task.classes,
                     state.head);
  }
  ++state.tasks_done;
}

double accuracy(const LabeledSet& set, const ModelState& state, Exec exec) {
  if (set.size() == 0) throw DataError(DataErrorKind::inconsistent, "accuracy: empty set");
  const std::size_t correct = count_correct(set.x, set.y, state.adapter.view(), state.head, exec);
  return 100.0 * static_cast<double>(correct) / static_cast<double>(set.size());
}

EvalMatrix evaluate_stream(const TaskStream& features, const std::vector<ModelState>& snapshots,
                           Exec exec) {
  const std::size_t k = features.tasks.size();
  if (snapshots.size() != k) {
    throw ConfigError("evaluate_stream: expected " + std::to_string(k) + " snapshots, got " +
                      std::to_string(snapshots.size()));
  }
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) cells.emplace_back(i, j);
  }
  std::vector<double> acc(cells.size());
  parallel_for(
      cells.size(),
      [&](std::size_t c) {
        const auto [i, j] = cells[c];
        acc[c] = accuracy(features.tasks[j].test, snapshots[i], Exec::serial);
      },
      exec);
  EvalMatrix a(k);
  for (std::size_t c = 0; c < cells.size(); ++c) a.set(cells[c].first, cells[c].second, acc[c]);
  return a;
}

StreamRun run_stream(const TaskStream& features, const TrainingConfig& cfg,
                     std::vector<ModelState> prior) {
  ModelState state = prior.empty() ? initial_state(cfg, features.input_dim) : prior.back();
  if (prior.size() != state.tasks_done || state.tasks_done > features.tasks.size()) {
    throw DataError(DataErrorKind::inconsistent,
                    "resume: have " + std::to_string(prior.size()) + " snapshots but the state has " +
                        std::to_string(state.tasks_done) + " tasks done of " +
                        std::to_string(features.tasks.size()));
  }
  StreamRun run;
  run.snapshots = std::move(prior);
  for (std::size_t t = state.tasks_done; t < features.tasks.size(); ++t) {
    train_task_variant(features.tasks[t], state, cfg);
    run.snapshots.push_back(state);
  }
  run.matrix = evaluate_stream(features, run.snapshots, cfg.exec);
  return run;
}

StreamRun run_stream(const TaskStream& features, const TrainingConfig& cfg) {
  return run_stream(features, cfg, std::vector<ModelState>{});
}

// ---------------------------------------------------------------------------
// Loss views

std::string_view to_string(ParamTarget t) noexcept {
  switch (t) {
    case ParamTarget::adapter: return "adapter";
    case ParamTarget::head: return "head";
    case ParamTarget::all: return "all";
  }
  return "?";
}

ParamTarget param_target_from_string(std::string_view s) {
  if (s == "adapter") return ParamTarget::adapter;
  if (s == "head") return ParamTarget::head;
  if (s == "all") return ParamTarget::all;
  throw ConfigError("unknown parameter target '" + std::string(s) + "'");
}

namespace {
struct SplitViews {
  AdapterView adapter;
  HeadView head;
};

SplitViews split(const ModelState& state, ParamTarget target, std::span<const double> params) {
  SplitViews v{state.adapter.view(), state.head.view()};
  const std::size_t na = v.adapter.param_count();
  const std::size_t nh = v.head.weights.size();
  switch (target) {
    case ParamTarget::adapter:
      require_same_size(params.size(), na, "StateLoss adapter parameters");
      v.adapter.params = params;
      break;
    case ParamTarget::head:
      require_same_size(params.size(), nh, "StateLoss head parameters");
      v.head.weights = params;
      break;
    case ParamTarget::all:
      require_same_size(params.size(), na + nh, "StateLoss parameters");
      v.adapter.params = params.first(na);
      v.head.weights = params.subspan(na, nh);
      break;
  }
  return v;
}
}  // namespace

double StateLoss::operator()(std::span<const double> params) const {
  const SplitViews v = split(state, target, params);
  return batch_loss(BatchView{&data.x, rows, targets}, v.adapter, v.head, exec);
}

Vector StateLoss::parameters() const {
  const auto& phi = state.adapter.params().values();
  const auto& psi = state.head.params().values();
  switch (target) {
    case ParamTarget::adapter: return phi;
    case ParamTarget::head: return psi;
    case ParamTarget::all: break;
  }
  Vector all(phi.size() + psi.size());
  std::copy(phi.begin(), phi.end(), all.begin());
  std::copy(psi.begin(), psi.end(), all.begin() + static_cast<std::ptrdiff_t>(phi.size()));
  return all;
}

Vector StateLoss::gradient(std::span<const double> params) const {
  const SplitViews v = split(state, target, params);
  const bool want_adapter = target != ParamTarget::head;
  const bool want_head = target != ParamTarget::adapter;
  const auto g = loss_and_gradients(data.x, rows, targets, v.adapter, v.head, want_head, want_adapter);
  if (target == ParamTarget::adapter) return g.adapter;
  if (target == ParamTarget::head) return g.head;
  Vector all(g.adapter.size() + g.head.size());
  std::copy(g.adapter.begin(), g.adapter.end(), all.begin());
  std::copy(g.head.begin(), g.head.end(), all.begin() + static_cast<std::ptrdiff_t>(g.adapter.size()));
  return all;
}

StateLoss old_task_loss(const TaskStream& features, std::size_t upto, const ModelState& state,
                        ParamTarget target, Exec exec) {
  if (upto == 0 || upto > features.tasks.size()) {
    throw ConfigError("old_task_loss: need between 1 and " + std::to_string(features.tasks.size()) +
                      " old tasks");
  }
  if (state.head.family() == HeadFamily::prototype) {
    throw ConfigError("old_task_loss: prototype heads have no differentiable loss");
  }
  StateLoss loss;
  loss.data.x = Matrix(0, features.input_dim);
  for (std::size_t t = 0; t < upto; ++t) {
    const auto& set = features.tasks[t].train;
    for (std::size_t r = 0; r < set.size(); ++r) {
      loss.data.x.append_row(set.x.row(r));
      loss.data.y.push_back(set.y[r]);
    }
  }
  loss.rows.resize(loss.data.size());
  std::iota(loss.rows.begin(), loss.rows.end(), std::size_t{0});
  loss.targets = targets_for(loss.data, state.head);
  loss.state = state;
  loss.target = target;
  loss.exec = exec;
  return loss;
}

}  // namespace zofc
