#pragma once

// Experiment configuration documents, presets and the subcommands behind the
// command-line tool.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "svt/dqn.hpp"
#include "svt/metrics.hpp"
#include "svt/tasks.hpp"

namespace svt::experiment {

/// Environment variables read on top of the config file, before command-line
/// flags: SVT_NAME, SVT_PRESET, SVT_SEED, SVT_OUT, SVT_JOBS, SVT_NUM_TASKS,
/// SVT_TRAINING_STEPS, SVT_EVAL_EPISODES.
inline constexpr const char* kEnvPrefix = "SVT_";

enum class Preset { desk, paper };

struct SelectionOptions {
  int population = 30;
  double ratio = 0.5;
  double screening_fraction = 0.25;
  int eval_episodes = 300;
};

/// Fully resolved experiment: every field set, validated.
struct ExperimentConfig {
  std::string name;
  tasks::Scenario scenario = tasks::Scenario::gridworld;
  tasks::Setting setting = tasks::Setting::learning_system;
  int num_tasks = 10;
  std::vector<transfer::ArchitectureKind> architectures;
  Preset preset = Preset::desk;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = ".";
  int jobs = 1;
  dqn::DqnConfig dqn;
  dqn::DqnConfig system_dqn;
  env::GridworldConfig grid;
  env::DrivingConfig driving;
  tasks::LayoutOptions layout;
  SelectionOptions selection;
  metrics::MetricOptions metrics;
  double transform_noise = 1e-3;

  std::filesystem::path run_root() const { return output_dir / "runs" / name; }
};

/// Command-line values that take precedence over file and environment.
struct Overrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

/// Canonical document of the resolved config (output_dir and jobs omitted,
/// since they do not affect results).
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Hex hash of to_json(cfg).
std::string config_hash(const ExperimentConfig& cfg);

/// Validates a raw document and resolves it against its preset. All field
/// problems are reported together in one InvalidConfig, one per line, each
/// prefixed with the field path.
ExperimentConfig resolve(const nlohmann::json& raw);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Applies SVT_* variables and then the command-line overrides to a raw
/// document.
nlohmann::json apply_overrides(nlohmann::json raw, const Overrides& overrides,
                               const EnvLookup& lookup = process_env);

/// Reads, overrides and resolves. Throws IoError naming the path when the
/// file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {},
                             const EnvLookup& lookup = process_env);

/// Builds (or reloads from tasks.json under the run root) the task sequence.
std::vector<tasks::TaskSpec> prepare_tasks(const ExperimentConfig& cfg,
                                           const std::function<void(const std::string&)>& log = {});

/// Full pipeline; returns the run record.
tasks::ExperimentRecord run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const std::string&)>& log = {});

struct MetricsOutcome {
  std::vector<metrics::TransferReport> reports;
  std::vector<std::string> warnings;
};

/// Reports for every transfer run of task >= 2 against that task's scratch
/// run. Writes metrics/task<i>_<arch>.json and metrics/summary.csv.
MetricsOutcome compute_metrics(const std::filesystem::path& run_dir,
                               const metrics::MetricOptions& options = {});

/// Writes plots/{jumpstart,final_improvement,step_ratio,curves}.csv from
/// metrics/summary.csv and the run curves. Returns the files written.
std::vector<std::filesystem::path> write_plot_data(const std::filesystem::path& run_dir,
                                                   const metrics::MetricOptions& options = {});

// Subcommands. Each returns a process exit status and reports to out/err.
int cmd_run_sequence(const std::filesystem::path& config, const Overrides& overrides,
                     std::ostream& out, std::ostream& err);
int cmd_metrics(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);
int cmd_plot_data(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);
int cmd_train_scratch(const std::filesystem::path& config, const Overrides& overrides, int task,
                      std::ostream& out, std::ostream& err);

}  // namespace svt::experiment
