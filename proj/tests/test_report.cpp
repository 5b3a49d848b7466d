// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include "doctest.h"
#include "zofc/commands.hpp"
#include "zofc/error.hpp"
#include "zofc/report.hpp"

using namespace zofc;

namespace {

ExperimentConfig tiny_config(const std::string& variant) {
  ExperimentConfig c;
  c.stream.synthetic.num_tasks = 3;
  c.stream.synthetic.dim = 6;
  c.stream.synthetic.examples_per_class = 12;
  c.stream.synthetic.test_examples_per_class = 12;
  c.stream.synthetic.seed = 2;
  c.training.variant = variant_by_name(variant);
  c.training.budget = {2, 2, 8};
  c.training.seed = 4;
  c.probe.random_directions = 2;
  return c;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("reports round trip losslessly and validate") {
  for (const char* v : {"zofc", "prototype", "fo-adapter-zo-cls"}) {
    CAPTURE(v);
    const ExperimentConfig cfg = tiny_config(v);
    RunOutcome o = run_experiment(cfg, build_feature_stream(cfg));
    o.report.meta["note"] = "x";
    o.report.checkpoints = {"checkpoints/task-01.json"};
    const std::string text = serialize_report(o.report);
    const RunReport back = parse_report(text);
    CHECK(back == o.report);
    CHECK(serialize_report(back) == text);
    const auto errors = validate_report_json(report_to_json(o.report));
    for (const auto& e : errors) MESSAGE(e);
    CHECK(errors.empty());
    CHECK(o.report.metrics.size() == 3);
    CHECK(o.report.matrix.tasks() == 3);
    if (std::string(v) == "prototype") {
      CHECK_FALSE(o.report.cost.has_value());
      CHECK(o.report.flatness.empty());
    } else {
      CHECK(o.report.cost.has_value());
      // checkpoints 2 and 3, two rhos, two probe kinds
      CHECK(o.report.flatness.size() == 8);
    }
  }
}

TEST_CASE("validation catches structural problems") {
  const ExperimentConfig cfg = tiny_config("zofc");
  const RunOutcome o = run_experiment(cfg, build_feature_stream(cfg));
  auto j = report_to_json(o.report);
  j["kind"] = "something-else";
  j.erase("metrics");
  CHECK(validate_report_json(j).size() == 2);
  auto rows = report_to_json(o.report);
  rows["eval_matrix"][1].push_back(50.0);
  rows["eval_matrix"][0][0] = 140.0;
  CHECK(validate_report_json(rows).size() == 2);
  CHECK_THROWS_AS((parse_report("{")), DataError);
  CHECK_THROWS_AS((parse_report("{}")), DataError);
}

TEST_CASE("meta is excluded from determinism comparisons") {
  const ExperimentConfig cfg = tiny_config("zofc");
  RunOutcome a = run_experiment(cfg, build_feature_stream(cfg));
  RunOutcome b = run_experiment(cfg, build_feature_stream(cfg));
  a.report.meta["created_utc"] = "2026-01-01T00:00:00Z";
  b.report.meta["created_utc"] = "2026-10-15T00:00:00Z";
  const std::string ta = serialize_report(a.report), tb = serialize_report(b.report);
  CHECK(ta != tb);
  CHECK(report_without_meta(ta) == report_without_meta(tb));
}

TEST_CASE("checkpoints round trip every bit of the state") {
  for (const char* v : {"zofc", "prototype", "zo-adapter-prototype"}) {
    const ExperimentConfig cfg = tiny_config(v);
    const TaskStream s = build_feature_stream(cfg);
    const RunOutcome o = run_experiment(cfg, s);
    for (const ModelState& st : o.snapshots) {
      const Checkpoint c{cfg, st};
      const Checkpoint back = parse_checkpoint(serialize_checkpoint(c));
      CHECK(back == c);
    }
    // Resuming from a restored snapshot reproduces the original run.
    std::vector<ModelState> prior{parse_checkpoint(serialize_checkpoint({cfg, o.snapshots[0]})).state};
    const RunOutcome resumed = run_experiment(cfg, s, prior);
    CHECK(serialize_report(resumed.report) == serialize_report(o.report));
  }
  CHECK(checkpoint_file_name(1) == "task-01.json");
  CHECK(checkpoint_file_name(12) == "task-12.json");
  CHECK_THROWS_AS((parse_checkpoint(R"({"schema_version": 1, "kind": "zofc-checkpoint"})")), DataError);
}

TEST_CASE("text file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "zofc_report_test" / "nested";
  write_text_file(dir / "a.txt", "hello");
  CHECK(read_text_file(dir / "a.txt") == "hello");
  std::filesystem::remove_all(dir.parent_path());
  CHECK_THROWS_AS(read_text_file(dir / "a.txt"), DataError);
}

}  // TEST_SUITE
