// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "doctest.h"
#include "zofc/commands.hpp"
#include "zofc/feature_io.hpp"
#include "zofc/report.hpp"

using namespace zofc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(ZOFC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Result r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::current_path() / "cli_test_scratch" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string smoke_config() { return std::string(ZOFC_SOURCE_DIR) + "/configs/smoke.json"; }

fs::path write_config(const fs::path& dir, const std::string& body) {
  write_text_file(dir / "config.json", body);
  return dir / "config.json";
}

const char* kThreeTasks = R"({
  "stream": {"synthetic": {"num_tasks": 3, "classes_per_task": 2, "dim": 6,
                           "examples_per_class": 10, "test_examples_per_class": 10, "seed": 3}},
  "budget": {"head_epochs": 2, "adapter_epochs": 2, "batch_size": 8},
  "seed": 5,
  "probe": {"random_directions": 2}
})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run writes a report and checkpoints") {
  const fs::path out = scratch("run");
  const Result r = run_cli("run " + smoke_config() + " --output-dir " + out.string());
  INFO(r.out);
  REQUIRE(r.code == 0);
  const RunReport rep = load_report(out / "report.json");
  CHECK(rep.matrix.tasks() == 2);
  CHECK(rep.matrix.complete());
  CHECK(rep.checkpoints.size() == 2);
  CHECK(fs::exists(out / "checkpoints" / "task-01.json"));
  CHECK(fs::exists(out / "checkpoints" / "task-02.json"));
  CHECK(rep.meta.contains("created_utc"));
  CHECK(validate_report_json(nlohmann::ordered_json::parse(read_text_file(out / "report.json"))).empty());
}

TEST_CASE("identical runs give identical reports outside meta") {
  const fs::path out = scratch("determinism");
  REQUIRE(run_cli("run " + smoke_config() + " --output-dir " + out.string()).code == 0);
  const std::string first = read_text_file(out / "report.json");
  REQUIRE(run_cli("run " + smoke_config() + " --output-dir " + out.string() + " --exec serial").code == 0);
  const std::string second = read_text_file(out / "report.json");
  // The exec policy is echoed in the config, so compare against a parallel rerun too.
  REQUIRE(run_cli("run " + smoke_config() + " --output-dir " + out.string()).code == 0);
  const std::string third = read_text_file(out / "report.json");
  CHECK(report_without_meta(first) == report_without_meta(third));
  const RunReport a = parse_report(first), b = parse_report(second);
  CHECK(a.matrix == b.matrix);
  CHECK(a.counters == b.counters);
  CHECK(a.flatness == b.flatness);
}

TEST_CASE("the output directory comes from the environment unless a flag is given") {
  const fs::path env_dir = scratch("env");
  const fs::path flag_dir = scratch("flag");
  const std::string env = std::string(kOutputDirEnv) + "=" + env_dir.string();
  REQUIRE(run_cli("run " + smoke_config() + " --no-checkpoints", env).code == 0);
  CHECK(fs::exists(env_dir / "report.json"));
  CHECK_FALSE(fs::exists(env_dir / "checkpoints"));
  REQUIRE(run_cli("run " + smoke_config() + " --output-dir " + flag_dir.string(), env).code == 0);
  CHECK(fs::exists(flag_dir / "report.json"));
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run_cli("run " + write_config(dir, "{ \"seed\": ").string()).code == kExitConfig);
  const Result field = run_cli("run " + write_config(dir, R"({"spsa": {"queries": 0}})").string());
  CHECK(field.code == kExitConfig);
  CHECK(field.out.find("queries") != std::string::npos);
  CHECK(run_cli("run " + (dir / "missing.json").string()).code == kExitConfig);
  CHECK(run_cli("run --bogus-flag").code == kExitConfig);
  CHECK(run_cli("run " + smoke_config() + " --variant nope --output-dir " + dir.string()).code ==
        kExitConfig);

  const fs::path data = write_config(
      dir, R"({"stream": {"source": "features", "train_path": "nope.bin", "test_path": "nope.bin"},
              "output": {"dir": ")" + dir.string() + R"("}})");
  CHECK(run_cli("run " + data.string()).code == kExitData);

  const Result numeric = run_cli(
      "run " +
      write_config(dir, R"({"stream": {"synthetic": {"num_tasks": 1, "dim": 4, "examples_per_class": 8,
                                                    "test_examples_per_class": 4}},
                          "head_schedule": {"kind": "constant", "base_lr": 1e308},
                          "output": {"dir": ")" + dir.string() + R"("}})")
          .string());
  CHECK(numeric.code == kExitNumeric);
  CHECK(numeric.out.find("task 0") != std::string::npos);
}

TEST_CASE("feature files drive a run and validate-data checks them") {
  const fs::path dir = scratch("features");
  FeatureDataset train, test;
  train.features = Matrix(0, 3);
  test.features = Matrix(0, 3);
  train.label_width = test.label_width = 4;
  RngStream s("cli-features", 1);
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (int i = 0; i < 6; ++i) {
      Vector x = gaussian(3, s);
      x[c % 3] += 4.0 * (c < 3 ? 1.0 : -1.0);
      (i < 4 ? train : test).features.append_row(x.span());
      (i < 4 ? train : test).labels.push_back(c);
    }
  }
  save_features(dir / "train.bin", train);
  save_features(dir / "test.bin", test);
  const Result ok = run_cli("validate-data " + (dir / "train.bin").string() + " " +
                            (dir / "test.bin").string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("16 examples, dim 3") != std::string::npos);

  auto bytes = serialize_features(train);
  bytes.resize(bytes.size() - 1);
  write_text_file(dir / "bad.bin", std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  const Result bad = run_cli("validate-data " + (dir / "bad.bin").string());
  CHECK(bad.code == kExitData);
  CHECK(bad.out.find("bytes") != std::string::npos);

  const fs::path cfg = write_config(dir, R"({"stream": {"source": "features", "train_path": "train.bin",
      "test_path": "test.bin", "classes_per_task": 2}, "budget": {"head_epochs": 2, "adapter_epochs": 2, "batch_size": 8}})");
  REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + dir.string()).code == 0);
  CHECK(load_report(dir / "report.json").matrix.tasks() == 2);
}

TEST_CASE("grid writes one report per variant") {
  const fs::path dir = scratch("grid");
  const Result r = run_cli("grid " + smoke_config() + " --output-dir " + dir.string() + " --no-checkpoints");
  INFO(r.out);
  REQUIRE(r.code == 0);
  std::size_t reports = 0;
  for (const auto& v : standard_variants()) {
    const fs::path p = dir / ("report-" + v.name + ".json");
    CHECK(fs::exists(p));
    if (fs::exists(p)) {
      ++reports;
      CHECK(load_report(p).config.training.variant == v);
    }
  }
  CHECK(reports == 7);
}

TEST_CASE("resuming from a checkpoint reproduces the full run") {
  const fs::path dir = scratch("resume");
  const fs::path cfg = write_config(dir, kThreeTasks);
  REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + dir.string()).code == 0);
  const std::string full = read_text_file(dir / "report.json");
  const Result r = run_cli("run " + cfg.string() + " --output-dir " + dir.string() + " --resume " +
                           (dir / "checkpoints" / "task-02.json").string());
  INFO(r.out);
  REQUIRE(r.code == 0);
  const std::string resumed = read_text_file(dir / "report.json");
  CHECK(report_without_meta(full) == report_without_meta(resumed));
  CHECK(parse_report(resumed).meta["resumed_from"].is_string());
  CHECK(parse_report(full).meta["resumed_from"].is_null());
  CHECK(run_cli("run " + cfg.string() + " --resume " + (dir / "nothing.json").string()).code == kExitData);
}

TEST_CASE("probe emits flatness CSV") {
  const fs::path dir = scratch("probe");
  const fs::path cfg = write_config(dir, kThreeTasks);
  REQUIRE(run_cli("run " + cfg.string() + " --output-dir " + (dir / "zofc").string()).code == 0);
  REQUIRE(run_cli("run " + cfg.string() + " --variant fo-adapter-fo-cls --output-dir " +
                  (dir / "fo").string())
              .code == 0);

  const Result one = run_cli("probe " + (dir / "zofc" / "report.json").string() + " --rho 0.01 --probe ascent");
  INFO(one.out);
  REQUIRE(one.code == 0);
  std::istringstream lines(one.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "task,rho,probe,phi");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2);  // checkpoints 2 and 3

  const Result ckpt = run_cli("probe " + (dir / "zofc" / "checkpoints" / "task-03.json").string() +
                              " --rho 0.05");
  CHECK(ckpt.code == 0);
  CHECK(ckpt.out.find("3,0.05,ascent,") != std::string::npos);
  CHECK(ckpt.out.find("3,0.05,random,") != std::string::npos);

  const Result paired = run_cli("probe " + (dir / "zofc" / "report.json").string() + " " +
                                (dir / "fo" / "report.json").string() + " --rho 0.01 -o " +
                                (dir / "paired.csv").string());
  CHECK(paired.code == 0);
  const std::string csv = read_text_file(dir / "paired.csv");
  CHECK(csv.rfind("task,rho,probe,phi_zofc,phi_fo-adapter-fo-cls\n", 0) == 0);

  CHECK(run_cli("probe " + (dir / "zofc" / "report.json").string() + " --rho 0").code == kExitConfig);
  CHECK(run_cli("probe " + (dir / "absent.json").string()).code == kExitData);
}

TEST_CASE("flops table formats") {
  const Result text = run_cli("flops");
  CHECK(text.code == 0);
  CHECK(text.out.find("2.545e+12") != std::string::npos);
  CHECK(text.out.find("7.636e+12") != std::string::npos);
  const Result csv = run_cli("flops --format csv --regime zo -q 4");
  CHECK(csv.code == 0);
  CHECK(csv.out.find("zo,4,9,") != std::string::npos);
  const Result json = run_cli("flops --format json --regime zofc-early");
  CHECK(json.code == 0);
  const auto j = nlohmann::json::parse(json.out);
  CHECK(j["rows"][0]["backward_flops"] == 2064864.0);
  CHECK(run_cli("flops --regime sideways").code == kExitConfig);
  CHECK(run_cli("flops --format yaml").code == kExitConfig);
}

}  // TEST_SUITE
