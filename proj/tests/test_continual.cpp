// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "zofc/continual.hpp"
#include "zofc/error.hpp"

using namespace zofc;

namespace {

SyntheticStreamSpec small_spec(std::size_t tasks, double separation, std::uint64_t seed) {
  SyntheticStreamSpec s;
  s.num_tasks = tasks;
  s.classes_per_task = 2;
  s.dim = 8;
  s.examples_per_class = 30;
  s.test_examples_per_class = 30;
  s.separation = separation;
  s.seed = seed;
  return s;
}

TrainingConfig quick_config(MethodVariant v, std::uint64_t seed = 3) {
  TrainingConfig cfg;
  cfg.variant = std::move(v);
  cfg.budget = {3, 4, 16};
  cfg.head_schedule.base_lr = 0.1;
  cfg.adapter_schedule.base_lr = 0.05;
  cfg.seed = seed;
  return cfg;
}

// Independent accuracy scan without the kernels.
double scan_accuracy(const LabeledSet& set, const ModelState& s) {
  std::size_t ok = 0;
  for (std::size_t r = 0; r < set.size(); ++r) {
    const Vector z = adapter_forward(set.x.row(r), s.adapter);
    const int pred = s.head.family() == HeadFamily::prototype
                         ? prototype_predict(z, s.head)
                         : argmax_predict(head_scores(z, s.head), s.head.class_ids());
    ok += pred == set.y[r] ? 1 : 0;
  }
  return 100.0 * static_cast<double>(ok) / static_cast<double>(set.size());
}

}  // namespace

TEST_SUITE("continual") {

TEST_CASE("synthetic streams are deterministic and class-disjoint") {
  const TaskStream a = make_synthetic_stream(small_spec(3, 4.0, 11));
  const TaskStream b = make_synthetic_stream(small_spec(3, 4.0, 11));
  CHECK(a == b);
  CHECK_FALSE(a == make_synthetic_stream(small_spec(3, 4.0, 12)));
  CHECK_NOTHROW(a.validate());
  REQUIRE(a.tasks.size() == 3);
  std::set<int> seen;
  for (const Task& t : a.tasks) {
    CHECK(t.classes.size() == 2);
    CHECK(t.train.size() == 60);
    CHECK(t.test.size() == 60);
    for (int c : t.classes) CHECK(seen.insert(c).second);
  }
  CHECK_THROWS_AS(make_synthetic_stream(small_spec(0, 4.0, 1)), ConfigError);
  CHECK_THROWS_AS(make_synthetic_stream(small_spec(2, -1.0, 1)), ConfigError);
}

TEST_CASE("stream validation rejects overlapping classes and missing splits") {
  TaskStream s = make_synthetic_stream(small_spec(2, 4.0, 1));
  TaskStream overlap = s;
  overlap.tasks[1].classes.push_back(0);
  CHECK_THROWS_AS(overlap.validate(), DataError);
  TaskStream no_test = s;
  no_test.tasks[0].test.x = Matrix(0, 8);
  no_test.tasks[0].test.y.clear();
  CHECK_THROWS_AS(no_test.validate(), DataError);
  TaskStream stray = s;
  stray.tasks[0].train.y[0] = 3;
  CHECK_THROWS_AS(stray.validate(), DataError);
}

TEST_CASE("labeled sets group into tasks by ascending class id") {
  LabeledSet train{Matrix(0, 2), {}}, test{Matrix(0, 2), {}};
  for (int c : {5, 1, 3, 7, 9}) {
    for (int k = 0; k < 2; ++k) {
      train.x.append_row(Vector{double(c), double(k)}.span());
      train.y.push_back(c);
      test.x.append_row(Vector{double(c), -double(k)}.span());
      test.y.push_back(c);
    }
  }
  const TaskStream s = stream_from_labeled_sets(train, test, 2);
  REQUIRE(s.tasks.size() == 3);
  CHECK(s.tasks[0].classes == std::vector<int>{1, 3});
  CHECK(s.tasks[1].classes == std::vector<int>{5, 7});
  CHECK(s.tasks[2].classes == std::vector<int>{9});
  CHECK(s.tasks[2].train.size() == 2);
  test.y[0] = 42;
  CHECK_THROWS_AS(stream_from_labeled_sets(train, test, 2), DataError);
}

TEST_CASE("variant grid and validation") {
  const auto vs = standard_variants();
  CHECK(vs.size() == 7);
  std::set<std::string> names;
  for (const auto& v : vs) {
    CHECK_NOTHROW(v.validate());
    names.insert(v.name);
    CHECK(variant_by_name(v.name) == v);
  }
  CHECK(names.size() == 7);
  CHECK(zofc_variant().adapter == ComponentOptimizer::zo);
  CHECK(zofc_variant().head == ComponentOptimizer::fo);
  CHECK_THROWS_AS((MethodVariant{"x", ComponentOptimizer::fo, HeadFamily::prototype,
                                 ComponentOptimizer::fo}.validate()),
                  ConfigError);
  CHECK_THROWS_AS((MethodVariant{"x", ComponentOptimizer::fo, HeadFamily::linear,
                                 ComponentOptimizer::none}.validate()),
                  ConfigError);
  CHECK_THROWS_AS(variant_by_name("nope"), ConfigError);
}

TEST_CASE("well separated clusters: an FO linear probe exceeds 95 percent per task") {
  const TaskStream s = make_synthetic_stream(small_spec(2, 10.0, 5));
  TrainingConfig cfg = quick_config({"probe", ComponentOptimizer::none, HeadFamily::linear,
                                     ComponentOptimizer::fo});
  cfg.budget = {20, 0, 16};
  ModelState st = initial_state(cfg, s.input_dim);
  for (const Task& t : s.tasks) {
    ModelState local = st;
    train_task_variant(t, local, cfg);
    CHECK(accuracy(t.test, local) > 95.0);
  }
}

TEST_CASE("indistinguishable classes give chance accuracy") {
  SyntheticStreamSpec spec = small_spec(1, 0.0, 8);
  spec.examples_per_class = 200;
  spec.test_examples_per_class = 400;
  const TaskStream s = make_synthetic_stream(spec);
  TrainingConfig cfg = quick_config({"probe", ComponentOptimizer::none, HeadFamily::linear,
                                     ComponentOptimizer::fo});
  ModelState st = initial_state(cfg, s.input_dim);
  train_task_variant(s.tasks[0], st, cfg);
  CHECK(std::abs(accuracy(s.tasks[0].test, st) - 50.0) < 7.5);
}

TEST_CASE("zero adapter epochs reduce the hybrid to the learnable-classifier variant") {
  const TaskStream s = make_synthetic_stream(small_spec(2, 3.0, 2));
  TrainingConfig zofc = quick_config(zofc_variant());
  zofc.budget.adapter_epochs = 0;
  TrainingConfig cls = zofc;
  cls.variant = variant_by_name("learnable-cls");
  const StreamRun a = run_stream(s, zofc);
  const StreamRun b = run_stream(s, cls);
  CHECK(a.matrix == b.matrix);
  CHECK(a.snapshots.back().head == b.snapshots.back().head);
  CHECK(a.snapshots.back().counters.zo_steps == 0);
}

TEST_CASE("one batch with Q=1 matches a hand-stepped trace") {
  SyntheticStreamSpec spec = small_spec(1, 3.0, 4);
  spec.examples_per_class = 6;
  const TaskStream s = make_synthetic_stream(spec);
  const Task& task = s.tasks[0];
  TrainingConfig cfg = quick_config(zofc_variant(), 9);
  cfg.budget = {1, 1, 64};
  cfg.spsa.queries = 1;
  cfg.spsa.clip_threshold = std::numeric_limits<double>::infinity();

  ModelState st = initial_state(cfg, s.input_dim);
  ModelState hand = st;
  st.head.register_classes(task.classes, st.streams.head_init);
  hand.head.register_classes(task.classes, hand.streams.head_init);
  std::vector<ZoStepResult> seen;
  train_task_zofc(task, st, cfg, [&](std::string_view c, const ZoStepResult& r) {
    CHECK(c == "adapter");
    seen.push_back(r);
  });
  REQUIRE(seen.size() == 1);

  // Batch order: one Fisher-Yates pass of the shuffle stream.
  const std::size_t n = task.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[hand.streams.shuffle.next_below(i)]);
  std::vector<std::size_t> targets;
  for (std::size_t r : order) targets.push_back(hand.head.row_of(task.train.y[r]));

  // (i) FO head step on adapted features with the adapter fixed.
  Matrix z(0, s.input_dim);
  for (std::size_t r : order) z.append_row(adapter_forward(task.train.x.row(r), hand.adapter).span());
  const Vector gh = head_gradient(z, targets, hand.head.view());
  Vector& psi = hand.head.params().values();
  const Adapter phi_before = hand.adapter;
  psi = fo_sgd_step(gh, psi, cfg.head_schedule.base_lr);
  CHECK(hand.adapter == phi_before);

  // (ii) SPSA step on the adapter against the updated head.
  const ClassifierHead head_after = hand.head;
  const auto loss = [&](std::span<const double> p) {
    Adapter a = hand.adapter;
    std::copy(p.begin(), p.end(), a.params().values().begin());
    double total = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Vector zz = adapter_forward(task.train.x.row(order[k]), a);
      total += cross_entropy(head_scores(zz, head_after), targets[k]).value;
    }
    return total / static_cast<double>(order.size());
  };
  const auto r = zo_sgd_step(loss, hand.adapter.params().values(), cfg.spsa,
                             cfg.adapter_schedule.base_lr, hand.streams.zo_adapter, Exec::serial);
  CHECK(hand.head == head_after);

  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].seed == seen[0].records[0].seed);
  CHECK(r.records[0].step == seen[0].records[0].step);
  CHECK(r.records[0].projected_grad ==
        doctest::Approx(seen[0].records[0].projected_grad).epsilon(1e-9));
  const auto& a = st.adapter.params().values();
  const auto& b = hand.adapter.params().values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  const auto& ha = st.head.params().values();
  const auto& hb = hand.head.params().values();
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(ha[i] == doctest::Approx(hb[i]).epsilon(1e-12));
  CHECK(st.counters.zo_steps == 1);
  CHECK(st.counters.fo_steps == 1);
  CHECK(st.counters.loss_evaluations == 3);
}

TEST_CASE("the hybrid trainer fits a separable two-class task") {
  const TaskStream s = make_synthetic_stream(small_spec(1, 4.0, 6));
  TrainingConfig cfg = quick_config(zofc_variant());
  ModelState st = initial_state(cfg, s.input_dim);
  train_task_variant(s.tasks[0], st, cfg);
  CHECK(accuracy(s.tasks[0].train, st) > 90.0);
}

TEST_CASE("training requires registered classes and the hybrid variant") {
  const TaskStream s = make_synthetic_stream(small_spec(1, 4.0, 6));
  TrainingConfig cfg = quick_config(zofc_variant());
  ModelState st = initial_state(cfg, s.input_dim);
  CHECK_THROWS_AS(train_task_zofc(s.tasks[0], st, cfg), ConfigError);
  cfg.variant = variant_by_name("learnable-cls");
  CHECK_THROWS_AS(train_task_zofc(s.tasks[0], st, cfg), ConfigError);
}

TEST_CASE("the prototype variant only grows centroids") {
  const TaskStream s = make_synthetic_stream(small_spec(3, 4.0, 7));
  const TrainingConfig cfg = quick_config(variant_by_name("prototype"));
  ModelState st = initial_state(cfg, s.input_dim);
  const Adapter a0 = st.adapter;
  for (std::size_t t = 0; t < 3; ++t) {
    train_task_variant(s.tasks[t], st, cfg);
    CHECK(st.adapter == a0);
    CHECK(st.head.num_classes() == 2 * (t + 1));
  }
  CHECK(st.counters.fo_steps == 0);
  CHECK(st.counters.zo_steps == 0);
}

TEST_CASE("FO and ZO adapters differ only in adapter updates") {
  const TaskStream s = make_synthetic_stream(small_spec(1, 3.0, 9));
  TrainingConfig fo = quick_config(variant_by_name("fo-adapter-fo-cls"));
  TrainingConfig zo = quick_config(zofc_variant());
  ModelState a = initial_state(fo, s.input_dim);
  ModelState b = initial_state(zo, s.input_dim);
  CHECK(a == b);
  train_task_variant(s.tasks[0], a, fo);
  train_task_variant(s.tasks[0], b, zo);
  CHECK(a.streams.shuffle == b.streams.shuffle);
  CHECK(a.streams.head_init == b.streams.head_init);
  CHECK(a.counters.zo_steps == 0);
  CHECK(b.counters.zo_steps > 0);
  CHECK_FALSE(a.adapter == b.adapter);
}

TEST_CASE("evaluation matrix matches an independent scan") {
  const TaskStream s = make_synthetic_stream(small_spec(3, 2.5, 10));
  for (const auto& v : standard_variants()) {
    const StreamRun run = run_stream(s, quick_config(v));
    REQUIRE(run.matrix.complete());
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        CHECK(run.matrix.at(i, j) == scan_accuracy(s.tasks[j].test, run.snapshots[i]));
      }
    }
    // The class registry only grows.
    for (std::size_t i = 1; i < 3; ++i) {
      for (int c : run.snapshots[i - 1].head.class_ids()) CHECK(run.snapshots[i].head.has_class(c));
    }
  }
  CHECK_THROWS_AS((evaluate_stream(s, {})), ConfigError);
}

TEST_CASE("single task and perfect classifier matrices") {
  const TaskStream s1 = make_synthetic_stream(small_spec(1, 3.0, 1));
  const StreamRun one = run_stream(s1, quick_config(variant_by_name("prototype")));
  CHECK(one.matrix.tasks() == 1);
  SyntheticStreamSpec far = small_spec(3, 50.0, 2);
  far.noise = 0.1;
  const StreamRun perfect = run_stream(make_synthetic_stream(far),
                                       quick_config(variant_by_name("prototype")));
  for (const auto& row : perfect.matrix.rows()) {
    for (double v : row) CHECK(v == 100.0);
  }
}

TEST_CASE("stream runs are reproducible and resumable") {
  const TaskStream s = make_synthetic_stream(small_spec(3, 3.0, 13));
  const TrainingConfig cfg = quick_config(zofc_variant());
  const StreamRun a = run_stream(s, cfg);
  const StreamRun b = run_stream(s, cfg);
  CHECK(a.matrix == b.matrix);
  CHECK(a.snapshots == b.snapshots);
  TrainingConfig serial = cfg;
  serial.exec = Exec::serial;
  CHECK(run_stream(s, serial).snapshots == a.snapshots);

  const StreamRun tail = run_stream(s, cfg, {a.snapshots[0]});
  CHECK(tail.snapshots == a.snapshots);
  CHECK(tail.matrix == a.matrix);
  CHECK_THROWS_AS(run_stream(s, cfg, {a.snapshots[1]}), DataError);
}

TEST_CASE("old-task loss: gradient matches finite differences for every target") {
  const TaskStream s = make_synthetic_stream(small_spec(3, 3.0, 14));
  const StreamRun run = run_stream(s, quick_config(zofc_variant()));
  for (ParamTarget t : {ParamTarget::adapter, ParamTarget::head, ParamTarget::all}) {
    const StateLoss loss = old_task_loss(s, 2, run.snapshots[2], t);
    CHECK(loss.data.size() == 120);
    const Vector p = loss.parameters();
    const Vector g = loss.gradient(p);
    const ScalarFunction f = [&](std::span<const double> x) { return loss(x); };
    const Vector fd = central_gradient(f, p, 1e-5);
    CHECK(norm2(g - fd) / norm2(fd) < 1e-6);
    CHECK(loss(p) == loss(p));
  }
  CHECK_THROWS_AS(old_task_loss(s, 0, run.snapshots[2], ParamTarget::all), ConfigError);
  const StreamRun proto = run_stream(s, quick_config(variant_by_name("prototype")));
  CHECK_THROWS_AS(old_task_loss(s, 1, proto.snapshots[0], ParamTarget::all), ConfigError);
}

TEST_CASE("numeric failures carry task and batch context") {
  TaskStream s = make_synthetic_stream(small_spec(1, 3.0, 15));
  TrainingConfig cfg = quick_config(zofc_variant());
  cfg.head_schedule.base_lr = 1e308;
  ModelState st = initial_state(cfg, s.input_dim);
  try {
    train_task_variant(s.tasks[0], st, cfg);
    FAIL("expected a numeric failure");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("task 0") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

}  // TEST_SUITE
