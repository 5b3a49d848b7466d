// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0
//
// zofc: run continual-learning experiments, probe flatness, print the cost
// model and check feature files.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zofc/commands.hpp"

namespace {

template <typename T>
void set_if(std::optional<T>& dst, const CLI::Option* opt, const T& value) {
  if (opt->count() > 0) dst = value;
}

struct OverrideFlags {
  std::uint64_t seed = 0;
  std::string variant;
  std::size_t queries = 0;
  double epsilon = 0.0;
  std::string exec;
  std::string output_dir;
  bool no_checkpoints = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* variant_opt = nullptr;
  CLI::Option* queries_opt = nullptr;
  CLI::Option* epsilon_opt = nullptr;
  CLI::Option* exec_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* no_ckpt_opt = nullptr;

  void attach(CLI::App* app) {
    seed_opt = app->add_option("--seed", seed, "Training seed");
    variant_opt = app->add_option("--variant", variant, "Method variant name");
    queries_opt = app->add_option("--queries", queries, "SPSA queries per step");
    epsilon_opt = app->add_option("--epsilon", epsilon, "SPSA perturbation scale");
    exec_opt = app->add_option("--exec", exec, "serial or parallel");
    output_opt = app->add_option("--output-dir", output_dir,
                                 "Output directory (overrides ZOFC_OUTPUT_DIR and the config)");
    no_ckpt_opt = app->add_flag("--no-checkpoints", no_checkpoints, "Do not write checkpoints");
  }

  zofc::ConfigOverrides get() const {
    zofc::ConfigOverrides o;
    set_if(o.seed, seed_opt, seed);
    set_if(o.variant, variant_opt, variant);
    set_if(o.queries, queries_opt, queries);
    set_if(o.epsilon, epsilon_opt, epsilon);
    set_if(o.exec, exec_opt, exec);
    set_if(o.output_dir, output_opt, output_dir);
    if (no_checkpoints) o.checkpoints = false;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zeroth-order continual learning experiments"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Train a task stream and write a report");
  std::string run_config, run_resume, run_report;
  OverrideFlags run_flags;
  run->add_option("config", run_config, "Experiment config (JSON)");
  auto* resume_opt = run->add_option("--resume", run_resume, "Resume from a checkpoint file");
  auto* report_opt = run->add_option("--report", run_report, "Report file name");
  run_flags.attach(run);

  // grid
  auto* grid = app.add_subcommand("grid", "Run every method variant on one stream");
  std::string grid_config;
  OverrideFlags grid_flags;
  grid->add_option("config", grid_config, "Experiment config (JSON)")->required();
  grid_flags.attach(grid);

  // probe
  auto* probe = app.add_subcommand("probe", "Flatness of old-task losses as CSV");
  std::vector<std::string> probe_inputs, probe_kinds;
  std::vector<double> probe_rhos;
  std::string probe_out;
  probe->add_option("inputs", probe_inputs, "Run reports or checkpoint files")->required();
  probe->add_option("--rho", probe_rhos, "Probe radii (repeatable)");
  probe->add_option("--probe", probe_kinds, "Probe kinds: ascent, random (repeatable)");
  auto* probe_out_opt = probe->add_option("-o,--output", probe_out, "CSV file (default stdout)");

  // flops
  auto* flops = app.add_subcommand("flops", "Per-batch FLOP breakdown");
  zofc::FlopsOptions fopts;
  std::string regime;
  auto* regime_opt = flops->add_option("--regime", regime, "fo, zo, zofc-early, zofc-late or all");
  flops->add_option("-q,--queries", fopts.model.queries, "SPSA queries");
  flops->add_option("--batch", fopts.model.batch, "Batch size");
  flops->add_option("--height", fopts.model.height, "Input height");
  flops->add_option("--width", fopts.model.width, "Input width");
  flops->add_option("--dim", fopts.model.dim, "Embedding dim");
  flops->add_option("--classes", fopts.model.classes, "Classes in the head");
  flops->add_option("--adapter-blocks", fopts.model.adapter_blocks, "Blocks with adapters");
  flops->add_option("--rank", fopts.model.rank, "Adapter rank");
  flops->add_option("--alpha-fc", fopts.model.alpha_fc, "Head backward cost in forwards");
  flops->add_option("--forward-flops", fopts.model.forward_per_batch,
                    "Measured forward FLOPs per batch");
  flops->add_flag("--count-eval-forward", fopts.model.count_eval_forward,
                  "Count the extra evaluation forward of the early hybrid regime");
  flops->add_option("--format", fopts.format, "text, csv or json");

  // validate-data
  auto* vdata = app.add_subcommand("validate-data", "Check binary feature files");
  std::vector<std::string> vfiles;
  vdata->add_option("files", vfiles, "Feature files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : zofc::kExitConfig;
  }

  if (run->parsed()) {
    zofc::RunOptions o;
    if (resume_opt->count() > 0) {
      o.resume = run_resume;
    } else if (run_config.empty()) {
      std::cerr << "config error: run needs a config file or --resume\n";
      return zofc::kExitConfig;
    }
    o.config = run_config;
    o.overrides = run_flags.get();
    set_if(o.report, report_opt, run_report);
    return zofc::cmd_run(o, std::cout, std::cerr);
  }
  if (grid->parsed()) {
    zofc::GridOptions o;
    o.config = grid_config;
    o.overrides = grid_flags.get();
    return zofc::cmd_grid(o, std::cout, std::cerr);
  }
  if (probe->parsed()) {
    zofc::ProbeOptions o;
    o.inputs.assign(probe_inputs.begin(), probe_inputs.end());
    o.rhos = probe_rhos;
    o.kinds = probe_kinds;
    if (probe_out_opt->count() > 0) o.output = probe_out;
    return zofc::cmd_probe(o, std::cout, std::cerr);
  }
  if (flops->parsed()) {
    if (regime_opt->count() > 0) fopts.regime = regime;
    return zofc::cmd_flops(fopts, std::cout, std::cerr);
  }
  zofc::ValidateDataOptions o;
  o.files.assign(vfiles.begin(), vfiles.end());
  return zofc::cmd_validate_data(o, std::cout, std::cerr);
}
