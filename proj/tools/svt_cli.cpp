#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svt/experiment.hpp"

int main(int argc, char** argv) {
  using namespace svt::experiment;
  CLI::App app{"Iterative safety validation with transfer across task sequences"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string preset;
  std::uint64_t seed = 0;
  int jobs = 1;
  int task = 1;
  std::string run_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory (runs/<name> is created below it)");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--preset", preset, "scale preset")->check(CLI::IsMember({"desk", "paper"}));
  };

  auto* run = app.add_subcommand("run-sequence", "train every run of a task sequence (resumable)");
  add_common(run);
  run->add_option("--jobs", jobs, "concurrent training runs")->check(CLI::PositiveNumber);

  auto* scratch = app.add_subcommand("train-scratch", "train one scratch adversary (debugging)");
  add_common(scratch);
  scratch->add_option("--task", task, "task index (1-based)");

  auto* met = app.add_subcommand("metrics", "compute transfer metrics for a run directory");
  met->add_option("run_dir", run_dir, "runs/<name> directory")->required();

  auto* plot = app.add_subcommand("plot-data", "write per-figure tables from computed metrics");
  plot->add_option("run_dir", run_dir, "runs/<name> directory")->required();

  CLI11_PARSE(app, argc, argv);

  auto overrides = [&](CLI::App* cmd) {
    Overrides o;
    if (cmd->count("--preset")) o.preset = preset;
    if (cmd->count("--seed")) o.seed = seed;
    if (cmd->count("--out")) o.out = out;
    if (cmd->get_option_no_throw("--jobs") && cmd->count("--jobs")) o.jobs = jobs;
    return o;
  };

  if (*run) return cmd_run_sequence(config, overrides(run), std::cout, std::cerr);
  if (*scratch) return cmd_train_scratch(config, overrides(scratch), task, std::cout, std::cerr);
  if (*met) return cmd_metrics(run_dir, std::cout, std::cerr);
  if (*plot) return cmd_plot_data(run_dir, std::cout, std::cerr);
  return 1;
}
