#pragma once

// Task sequences and the iterative solver: task 1 is learned from scratch,
// later tasks with every requested transfer architecture using the scratch
// solutions of the earlier tasks as sources.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "svt/dqn.hpp"
#include "svt/driving.hpp"
#include "svt/gridworld.hpp"
#include "svt/sut.hpp"
#include "svt/transfer.hpp"

namespace svt::tasks {

enum class Scenario { gridworld, driving };
enum class Setting { learning_system, comparable };

std::string to_string(Scenario s);
std::string to_string(Setting s);
Scenario scenario_from_string(const std::string& s);
Setting setting_from_string(const std::string& s);

/// Driving tasks carry their blind spot in the driving config.
using SystemRef = std::variant<std::monostate, nn::Mlp, sut::TabularPolicy>;

struct TaskSpec {
  Scenario scenario = Scenario::gridworld;
  Setting setting = Setting::learning_system;
  int index = 1;
  env::GridworldConfig grid;
  env::DrivingConfig driving;
  SystemRef system;
  std::string system_id;

  int state_dim() const;
  int num_actions() const;
  /// Fresh adversary environments for this task. Throws InvalidConfig when
  /// the system reference does not fit the scenario.
  env::EnvFactory factory() const;
};

nlohmann::json to_json(const TaskSpec& t);
TaskSpec task_from_json(const nlohmann::json& j);
/// Hex hash of the task document.
std::string task_hash(const TaskSpec& t);

/// One task per system checkpoint, all on the same layout. Throws
/// InvalidConfig when fewer than n_tasks checkpoints are supplied.
std::vector<TaskSpec> build_gw_learning_sequence(const env::GridworldConfig& cfg,
                                                 const std::vector<nn::Mlp>& checkpoints,
                                                 int n_tasks = 10);
/// Trains the system checkpoints first.
std::vector<TaskSpec> build_gw_learning_sequence(const env::GridworldConfig& cfg,
                                                 const dqn::DqnConfig& system_training,
                                                 int n_tasks = 10);

struct LayoutOptions {
  int width = 10;
  int height = 10;
  double wall_prob = 0.2;
  int min_goals = 2;
  int max_goals = 4;
  std::vector<double> goal_values = {1.0, 2.0, 3.0};
  int max_attempts = 1000;
  double slip_prob = 0.3;
  int max_steps = 50;
};

/// Random connected layout, distinct from every layout in `avoid`. Throws
/// LayoutError after max_attempts rejections.
env::GridworldConfig sample_layout(const LayoutOptions& options, Rng& rng,
                                   const std::vector<env::GridworldConfig>& avoid = {});

/// Layouts sampled independently, each solved by value iteration.
std::vector<TaskSpec> build_gw_comparable_sequence(int n_tasks, Rng& rng,
                                                   const LayoutOptions& options = {});

/// Widths linearly spaced from first_width to last_width, fixed direction.
std::vector<TaskSpec> build_ad_learning_sequence(const env::DrivingConfig& base = {},
                                                 int n_tasks = 10, double first_width = 30.0,
                                                 double last_width = 6.0,
                                                 double direction = 20.0);

struct BlindSpot {
  double direction = 0.0;
  double width = 0.0;
};

/// `population` blind spots with direction in [-30, 30] and width in [3, 9].
std::vector<BlindSpot> sample_blind_spots(int population, Rng& rng);

/// score(i, j): return of the adversary trained on candidate i when
/// evaluated on candidate j.
using CrossScore = std::function<double(int policy, int task)>;

/// Greedy selection in candidate order: a candidate is kept when its own
/// score is positive and, against every kept candidate, each policy scores
/// below ratio times the other task's own score. Throws SelectionError when
/// fewer than keep survive.
std::vector<int> select_dissimilar(int candidates, int keep, const CrossScore& score,
                                   double ratio = 0.5);

/// Trains an adversary for a task within the given budget.
using ScratchTrainer =
    std::function<std::unique_ptr<dqn::QArchitecture>(const TaskSpec& task, int candidate)>;

struct ComparableDrivingOptions {
  int population = 30;
  int keep = 9;
  double ratio = 0.5;
  int eval_episodes = 300;
  std::uint64_t eval_seed = 0;
};

std::vector<TaskSpec> build_ad_comparable_sequence(const env::DrivingConfig& base, Rng& rng,
                                                   const ScratchTrainer& trainer,
                                                   const ComparableDrivingOptions& options = {});

// ---------------------------------------------------------------------------

struct ArchivedSolution {
  int task = 0;
  transfer::SourceNet network;
  dqn::LearningCurve curve;
  std::string content_hash;
};

/// Scratch solutions in task order.
class SolutionArchive {
 public:
  /// Throws LayoutError unless task == size() + 1 and dims match earlier
  /// entries.
  void add(ArchivedSolution solution);
  std::size_t size() const { return entries_.size(); }
  const ArchivedSolution& at(int task) const;
  /// Networks of tasks 1..upto.
  std::vector<transfer::SourceNet> sources(int upto) const;
  transfer::SourceNet find_by_hash(const std::string& hash) const;

 private:
  std::vector<ArchivedSolution> entries_;
};

enum class RunStatus { completed, resumed, failed };
std::string to_string(RunStatus s);

struct RunRecord {
  int task = 0;
  std::string architecture;
  std::filesystem::path directory;
  RunStatus status = RunStatus::completed;
  long steps_trained = 0;
  std::string message;
  std::optional<dqn::TrainResult> result;
};

struct ExperimentRecord {
  std::vector<RunRecord> runs;
  long total_steps_trained() const;
  const RunRecord* find(int task, const std::string& architecture) const;
};

struct SequenceOptions {
  std::filesystem::path root;  // runs/<name>
  std::vector<transfer::ArchitectureKind> architectures;
  dqn::DqnConfig dqn;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  std::string config_hash;
  transfer::BuildOptions build;
  /// Progress lines; may be called from worker threads.
  std::function<void(const std::string&)> log;
};

/// Seed of one (task, architecture) run.
std::uint64_t run_seed(std::uint64_t master, int task, transfer::ArchitectureKind kind);

struct PlannedRun {
  int task = 0;
  transfer::ArchitectureKind kind = transfer::ArchitectureKind::scratch;
};

/// Scratch on every task, plus every requested transfer kind from task 2 on.
std::vector<PlannedRun> plan_runs(int n_tasks,
                                  const std::vector<transfer::ArchitectureKind>& architectures);

/// Trains every planned run, writing task<i>/<arch>/{curve.csv,
/// checkpoint.json, config.json, log.txt} below root. Completed runs are
/// loaded instead of retrained. A failed run is recorded and the sequence
/// continues; runs depending on a failed scratch run fail too.
ExperimentRecord run_sequence(const std::vector<TaskSpec>& tasks, const SequenceOptions& options);

/// True when dir holds a checkpoint and a curve with every evaluation.
bool run_complete(const std::filesystem::path& dir, const dqn::DqnConfig& cfg);

}  // namespace svt::tasks
