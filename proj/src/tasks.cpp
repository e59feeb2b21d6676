#include "svt/tasks.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "svt/checkpoint.hpp"
#include "svt/errors.hpp"

namespace svt::tasks {

namespace fs = std::filesystem;
using transfer::ArchitectureKind;

std::string to_string(Scenario s) { return s == Scenario::gridworld ? "gridworld" : "driving"; }
std::string to_string(Setting s) {
  return s == Setting::learning_system ? "learning_system" : "comparable";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "gridworld") return Scenario::gridworld;
  if (s == "driving") return Scenario::driving;
  throw InvalidConfig("unknown scenario '" + s + "' (expected gridworld or driving)");
}

Setting setting_from_string(const std::string& s) {
  if (s == "learning_system") return Setting::learning_system;
  if (s == "comparable") return Setting::comparable;
  throw InvalidConfig("unknown setting '" + s + "' (expected learning_system or comparable)");
}

int TaskSpec::state_dim() const { return scenario == Scenario::gridworld ? 4 : 6; }
int TaskSpec::num_actions() const {
  return scenario == Scenario::gridworld ? env::kNumMoves : env::kNumPedDisturbances;
}

env::EnvFactory TaskSpec::factory() const {
  if (scenario == Scenario::driving) {
    auto vehicle = std::make_shared<const sut::IdmController>(driving);
    return [cfg = driving, vehicle] {
      return std::make_unique<env::DrivingAdversaryEnv>(cfg, vehicle);
    };
  }
  std::shared_ptr<const env::GridSystemPolicy> policy;
  if (const auto* net = std::get_if<nn::Mlp>(&system)) {
    policy = std::make_shared<const sut::MlpGridPolicy>(*net);
  } else if (const auto* table = std::get_if<sut::TabularPolicy>(&system)) {
    policy = std::make_shared<const sut::TabularPolicy>(*table);
  } else {
    throw InvalidConfig("gridworld task " + std::to_string(index) + " has no system policy");
  }
  return [cfg = grid, policy] { return std::make_unique<env::GridworldAdversaryEnv>(cfg, policy); };
}

nlohmann::json to_json(const TaskSpec& t) {
  nlohmann::json j{{"scenario", to_string(t.scenario)},
                   {"setting", to_string(t.setting)},
                   {"index", t.index},
                   {"system_id", t.system_id}};
  if (t.scenario == Scenario::gridworld) {
    j["grid"] = env::to_json(t.grid);
  } else {
    j["driving"] = env::to_json(t.driving);
  }
  if (const auto* net = std::get_if<nn::Mlp>(&t.system)) {
    j["system"] = {{"kind", "mlp"}, {"network", io::mlp_to_json(*net)}};
  } else if (const auto* table = std::get_if<sut::TabularPolicy>(&t.system)) {
    j["system"] = sut::to_json(*table);
  } else {
    j["system"] = nullptr;
  }
  return j;
}

TaskSpec task_from_json(const nlohmann::json& j) {
  try {
    TaskSpec t;
    t.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    t.setting = setting_from_string(j.at("setting").get<std::string>());
    t.index = j.at("index").get<int>();
    t.system_id = j.at("system_id").get<std::string>();
    if (t.scenario == Scenario::gridworld) {
      t.grid = env::gridworld_from_json(j.at("grid"));
    } else {
      t.driving = env::driving_from_json(j.at("driving"));
    }
    const auto& sys = j.at("system");
    if (!sys.is_null()) {
      const auto kind = sys.at("kind").get<std::string>();
      if (kind == "mlp") {
        t.system = io::mlp_from_json(sys.at("network"));
      } else if (kind == "tabular") {
        t.system = sut::tabular_policy_from_json(sys);
      } else {
        throw IoError("unknown system kind " + kind);
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed task document: ") + e.what());
  }
}

std::string task_hash(const TaskSpec& t) { return io::hex64(fnv1a64(to_json(t).dump())); }

// ---------------------------------------------------------------------------

std::vector<TaskSpec> build_gw_learning_sequence(const env::GridworldConfig& cfg,
                                                 const std::vector<nn::Mlp>& checkpoints,
                                                 int n_tasks) {
  if (n_tasks < 1) throw InvalidConfig("need at least one task");
  if (static_cast<int>(checkpoints.size()) < n_tasks) {
    throw InvalidConfig("missing system checkpoints: have " + std::to_string(checkpoints.size()) +
                        ", need " + std::to_string(n_tasks));
  }
  std::vector<TaskSpec> out;
  for (int i = 1; i <= n_tasks; ++i) {
    TaskSpec t;
    t.scenario = Scenario::gridworld;
    t.setting = Setting::learning_system;
    t.index = i;
    t.grid = cfg;
    t.system = checkpoints[i - 1];
    t.system_id = "checkpoint:" + std::to_string(i);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskSpec> build_gw_learning_sequence(const env::GridworldConfig& cfg,
                                                 const dqn::DqnConfig& system_training,
                                                 int n_tasks) {
  return build_gw_learning_sequence(
      cfg, sut::train_system_checkpoints(cfg, system_training, n_tasks), n_tasks);
}

env::GridworldConfig sample_layout(const LayoutOptions& o, Rng& rng,
                                   const std::vector<env::GridworldConfig>& avoid) {
  if (o.min_goals < 1 || o.max_goals < o.min_goals || o.goal_values.empty()) {
    throw InvalidConfig("layout options need 1 <= min_goals <= max_goals and goal values");
  }
  for (int attempt = 0; attempt < o.max_attempts; ++attempt) {
    env::GridworldConfig cfg;
    cfg.width = o.width;
    cfg.height = o.height;
    cfg.slip_prob = o.slip_prob;
    cfg.max_steps = o.max_steps;
    std::vector<env::Cell> open;
    for (int y = 0; y < o.height; ++y) {
      for (int x = 0; x < o.width; ++x) {
        if (uniform01(rng) < o.wall_prob) {
          cfg.walls.insert({x, y});
        } else {
          open.push_back({x, y});
        }
      }
    }
    const int goals = o.min_goals + uniform_index(rng, o.max_goals - o.min_goals + 1);
    if (static_cast<int>(open.size()) < goals + 2) continue;
    for (int g = 0; g < goals; ++g) {
      const int k = g + uniform_index(rng, static_cast<int>(open.size()) - g);
      std::swap(open[g], open[k]);
      cfg.goal_rewards[open[g]] =
          o.goal_values[uniform_index(rng, static_cast<int>(o.goal_values.size()))];
    }
    if (!cfg.connected()) continue;
    const bool duplicate = std::any_of(avoid.begin(), avoid.end(), [&](const auto& a) {
      return a.walls == cfg.walls && a.goal_rewards == cfg.goal_rewards;
    });
    if (duplicate) continue;
    return cfg;
  }
  throw LayoutError("no acceptable layout after " + std::to_string(o.max_attempts) + " attempts");
}

std::vector<TaskSpec> build_gw_comparable_sequence(int n_tasks, Rng& rng,
                                                   const LayoutOptions& options) {
  if (n_tasks < 2) throw InvalidConfig("comparable sequences need at least two tasks");
  std::vector<env::GridworldConfig> layouts;
  std::vector<TaskSpec> out;
  for (int i = 1; i <= n_tasks; ++i) {
    layouts.push_back(sample_layout(options, rng, layouts));
    TaskSpec t;
    t.scenario = Scenario::gridworld;
    t.setting = Setting::comparable;
    t.index = i;
    t.grid = layouts.back();
    t.system = sut::value_iteration(t.grid, env::SystemRewardSpec{});
    t.system_id = "tabular:" + std::to_string(i);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

TaskSpec driving_task(const env::DrivingConfig& base, Setting setting, int index,
                      double direction, double width) {
  TaskSpec t;
  t.scenario = Scenario::driving;
  t.setting = setting;
  t.index = index;
  t.driving = base;
  t.driving.blind_spot_direction_deg = direction;
  t.driving.blind_spot_width_deg = width;
  std::ostringstream id;
  id.precision(17);
  id << "blind_spot:" << direction << ',' << width;
  t.system_id = id.str();
  return t;
}

}  // namespace

std::vector<TaskSpec> build_ad_learning_sequence(const env::DrivingConfig& base, int n_tasks,
                                                 double first_width, double last_width,
                                                 double direction) {
  if (n_tasks < 1) throw InvalidConfig("need at least one task");
  std::vector<TaskSpec> out;
  for (int i = 1; i <= n_tasks; ++i) {
    const double w = n_tasks == 1 ? first_width
                                  : first_width + (last_width - first_width) * (i - 1) / (n_tasks - 1);
    out.push_back(driving_task(base, Setting::learning_system, i, direction, w));
  }
  return out;
}

std::vector<BlindSpot> sample_blind_spots(int population, Rng& rng) {
  std::vector<BlindSpot> out;
  for (int i = 0; i < population; ++i) {
    BlindSpot b;
    b.direction = uniform(rng, -30.0, 30.0);
    b.width = uniform(rng, 3.0, 9.0);
    out.push_back(b);
  }
  return out;
}

std::vector<int> select_dissimilar(int candidates, int keep, const CrossScore& score,
                                   double ratio) {
  std::vector<int> kept;
  std::vector<double> own(candidates);
  for (int c = 0; c < candidates && static_cast<int>(kept.size()) < keep; ++c) {
    own[c] = score(c, c);
    if (!(own[c] > 0.0)) continue;
    bool ok = true;
    for (int s : kept) {
      if (!(score(c, s) < ratio * own[s]) || !(score(s, c) < ratio * own[c])) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(c);
  }
  if (static_cast<int>(kept.size()) < keep) {
    throw SelectionError(static_cast<int>(kept.size()), keep);
  }
  return kept;
}

std::vector<TaskSpec> build_ad_comparable_sequence(const env::DrivingConfig& base, Rng& rng,
                                                   const ScratchTrainer& trainer,
                                                   const ComparableDrivingOptions& options) {
  const auto spots = sample_blind_spots(options.population, rng);
  std::vector<TaskSpec> candidates;
  for (int c = 0; c < options.population; ++c) {
    candidates.push_back(driving_task(base, Setting::comparable, c + 1, spots[c].direction,
                                      spots[c].width));
  }
  std::vector<std::unique_ptr<dqn::QArchitecture>> policies;
  for (int c = 0; c < options.population; ++c) policies.push_back(trainer(candidates[c], c));

  std::map<std::pair<int, int>, double> memo;
  auto score = [&](int p, int t) {
    auto it = memo.find({p, t});
    if (it != memo.end()) return it->second;
    const auto stats =
        dqn::evaluate(candidates[t].factory(), *policies[p], options.eval_episodes,
                      derive_seed(options.eval_seed, static_cast<std::uint64_t>(t)));
    memo[{p, t}] = stats.mean;
    return stats.mean;
  };
  const auto kept = select_dissimilar(options.population, options.keep, score, options.ratio);
  std::vector<TaskSpec> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    TaskSpec t = candidates[kept[i]];
    t.index = static_cast<int>(i) + 1;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

void SolutionArchive::add(ArchivedSolution solution) {
  if (solution.task != static_cast<int>(entries_.size()) + 1) {
    throw LayoutError("archive expects task " + std::to_string(entries_.size() + 1) + ", got " +
                      std::to_string(solution.task));
  }
  if (!solution.network) throw LayoutError("archive entry without a network");
  if (!entries_.empty()) {
    const auto& first = *entries_.front().network;
    if (first.input_dim() != solution.network->input_dim() ||
        first.output_dim() != solution.network->output_dim()) {
      throw LayoutError("archive entries must share state and disturbance dimensions");
    }
  }
  if (solution.content_hash.empty()) solution.content_hash = io::content_hash(*solution.network);
  entries_.push_back(std::move(solution));
}

const ArchivedSolution& SolutionArchive::at(int task) const {
  if (task < 1 || task > static_cast<int>(entries_.size())) {
    throw LayoutError("no archived solution for task " + std::to_string(task));
  }
  return entries_[task - 1];
}

std::vector<transfer::SourceNet> SolutionArchive::sources(int upto) const {
  std::vector<transfer::SourceNet> out;
  for (int i = 1; i <= upto; ++i) out.push_back(at(i).network);
  return out;
}

transfer::SourceNet SolutionArchive::find_by_hash(const std::string& hash) const {
  for (const auto& e : entries_) {
    if (e.content_hash == hash) return e.network;
  }
  return nullptr;
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::resumed: return "resumed";
    case RunStatus::failed: return "failed";
  }
  return "unknown";
}

long ExperimentRecord::total_steps_trained() const {
  long n = 0;
  for (const auto& r : runs) n += r.steps_trained;
  return n;
}

const RunRecord* ExperimentRecord::find(int task, const std::string& architecture) const {
  for (const auto& r : runs) {
    if (r.task == task && r.architecture == architecture) return &r;
  }
  return nullptr;
}

std::uint64_t run_seed(std::uint64_t master, int task, ArchitectureKind kind) {
  return derive_seed(master, static_cast<std::uint64_t>(task),
                     seed_tag(transfer::to_string(kind)));
}

std::vector<PlannedRun> plan_runs(int n_tasks, const std::vector<ArchitectureKind>& architectures) {
  std::vector<PlannedRun> out;
  for (int i = 1; i <= n_tasks; ++i) out.push_back({i, ArchitectureKind::scratch});
  for (int i = 2; i <= n_tasks; ++i) {
    for (auto kind : {ArchitectureKind::fine_tune, ArchitectureKind::a2t,
                      ArchitectureKind::a2t_savt}) {
      if (std::find(architectures.begin(), architectures.end(), kind) != architectures.end()) {
        out.push_back({i, kind});
      }
    }
  }
  return out;
}

bool run_complete(const fs::path& dir, const dqn::DqnConfig& cfg) {
  if (!fs::exists(dir / "checkpoint.json") || !fs::exists(dir / "curve.csv")) return false;
  try {
    std::ifstream in(dir / "curve.csv");
    const auto curve = dqn::read_curve_csv(in);
    const long expected = cfg.training_steps / cfg.eval_every;
    if (static_cast<long>(curve.records.size()) != expected) return false;
    return expected == 0 || curve.records.back().train_step == expected * cfg.eval_every;
  } catch (const std::exception&) {
    return false;
  }
}

namespace {

struct Runner {
  const std::vector<TaskSpec>& tasks;
  const SequenceOptions& opt;
  std::mutex mu;
  std::condition_variable cv;
  // Scratch solution per task (index 0 unused); null until available.
  std::vector<transfer::SourceNet> scratch;

  Runner(const std::vector<TaskSpec>& t, const SequenceOptions& o)
      : tasks(t), opt(o), scratch(t.size() + 1) {}

  void log(const std::string& line) {
    if (!opt.log) return;
    std::lock_guard lock(mu);
    opt.log(line);
  }

  fs::path dir_of(const PlannedRun& r) const {
    return opt.root / ("task" + std::to_string(r.task)) / std::string(transfer::to_string(r.kind));
  }

  bool config_matches(const fs::path& dir) const {
    try {
      const auto j = io::read_json_file(dir / "config.json");
      return j.at("config_hash").get<std::string>() == opt.config_hash;
    } catch (const std::exception&) {
      return false;
    }
  }

  RunRecord execute(const PlannedRun& run, const std::vector<transfer::SourceNet>& sources) {
    const TaskSpec& task = tasks[run.task - 1];
    RunRecord rec;
    rec.task = run.task;
    rec.architecture = std::string(transfer::to_string(run.kind));
    rec.directory = dir_of(run);
    dqn::DqnConfig cfg = opt.dqn;
    cfg.seed = run_seed(opt.master_seed, run.task, run.kind);
    const fs::path& dir = rec.directory;

    if (run_complete(dir, cfg) && config_matches(dir)) {
      rec.status = RunStatus::resumed;
      if (run.kind == ArchitectureKind::scratch) {
        auto arch = transfer::load_architecture(io::read_json_file(dir / "checkpoint.json"));
        std::lock_guard lock(mu);
        scratch[run.task] = std::make_shared<const nn::Mlp>(
            dynamic_cast<const transfer::MlpQ&>(*arch).network());
      }
      log("task " + std::to_string(run.task) + " " + rec.architecture + ": already complete");
      return rec;
    }

    fs::create_directories(dir);
    nlohmann::json hashes = nlohmann::json::array();
    for (const auto& s : sources) hashes.push_back(io::content_hash(*s));
    const std::string thash = task_hash(task);
    nlohmann::json config{{"config_hash", opt.config_hash},
                          {"task", run.task},
                          {"task_hash", thash},
                          {"scenario", to_string(task.scenario)},
                          {"setting", to_string(task.setting)},
                          {"system_id", task.system_id},
                          {"architecture", rec.architecture},
                          {"seed", cfg.seed},
                          {"sources", hashes},
                          {"dqn", dqn::to_json(cfg)}};
    if (task.scenario == Scenario::gridworld) {
      config["env"] = env::to_json(task.grid);
    } else {
      config["env"] = env::to_json(task.driving);
    }
    io::write_json_file(dir / "config.json", config);
    fs::remove(dir / "checkpoint.json");

    std::ostringstream logtext;
    logtext << "task " << run.task << " architecture " << rec.architecture << " seed " << cfg.seed
            << "\n";
    try {
      Rng init(derive_seed(cfg.seed, seed_tag("init")));
      auto arch = transfer::build_architecture(run.kind, sources, task.state_dim(),
                                               task.num_actions(), init, opt.build);
      log("task " + std::to_string(run.task) + " " + rec.architecture + ": training " +
          std::to_string(cfg.training_steps) + " steps");
      auto result = dqn::train(task.factory(), *arch, cfg);
      rec.steps_trained = cfg.training_steps;

      std::ostringstream csv;
      dqn::write_curve_csv(csv, result.curve,
                           {"config_hash " + opt.config_hash, "task_hash " + thash,
                            "architecture " + rec.architecture,
                            "seed " + std::to_string(cfg.seed)});
      io::write_text_file(dir / "curve.csv", csv.str());
      io::CheckpointMeta meta{cfg.seed, cfg.training_steps, opt.config_hash};
      io::write_json_file(dir / "checkpoint.json", transfer::save_architecture(*arch, meta));

      logtext << "episodes " << result.episodes << "\n";
      logtext << "failures_discovered " << result.failures_discovered << "\n";
      if (result.first_failure) logtext << "first_failure_step " << result.first_failure->train_step << "\n";
      if (!result.curve.records.empty()) {
        logtext << "final_mean_return " << result.curve.records.back().mean_return << "\n";
      }
      logtext << "status completed\n";
      io::write_text_file(dir / "log.txt", logtext.str());

      if (run.kind == ArchitectureKind::scratch) {
        std::lock_guard lock(mu);
        scratch[run.task] = std::make_shared<const nn::Mlp>(
            dynamic_cast<const transfer::MlpQ&>(*arch).network());
      }
      rec.result = std::move(result);
      log("task " + std::to_string(run.task) + " " + rec.architecture + ": done");
    } catch (const std::exception& e) {
      rec.status = RunStatus::failed;
      rec.message = e.what();
      logtext << "status failed\nerror " << e.what() << "\n";
      io::write_text_file(dir / "log.txt", logtext.str());
      log("task " + std::to_string(run.task) + " " + rec.architecture + ": failed: " + e.what());
    }
    return rec;
  }
};

}  // namespace

ExperimentRecord run_sequence(const std::vector<TaskSpec>& tasks, const SequenceOptions& options) {
  if (tasks.empty()) throw InvalidConfig("task list is empty");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].index != static_cast<int>(i) + 1) {
      throw InvalidConfig("task indices must run 1..n in order");
    }
  }
  const auto plan = plan_runs(static_cast<int>(tasks.size()), options.architectures);
  Runner runner(tasks, options);
  ExperimentRecord record;
  record.runs.resize(plan.size());

  // 0 pending, 1 running, 2 finished
  std::vector<int> state(plan.size(), 0);
  auto ready = [&](std::size_t k) {
    const auto& r = plan[k];
    if (r.kind == ArchitectureKind::scratch) return true;
    for (std::size_t j = 0; j < plan.size(); ++j) {
      if (plan[j].kind == ArchitectureKind::scratch && plan[j].task < r.task && state[j] != 2) {
        return false;
      }
    }
    return true;
  };

  auto worker = [&] {
    for (;;) {
      std::size_t k = plan.size();
      std::vector<transfer::SourceNet> sources;
      std::string missing;
      {
        std::unique_lock lock(runner.mu);
        runner.cv.wait(lock, [&] {
          bool pending = false;
          for (std::size_t j = 0; j < plan.size(); ++j) {
            if (state[j] != 0) continue;
            pending = true;
            if (ready(j)) return true;
          }
          return !pending;
        });
        for (std::size_t j = 0; j < plan.size(); ++j) {
          if (state[j] == 0 && ready(j)) {
            k = j;
            break;
          }
        }
        if (k == plan.size()) return;
        state[k] = 1;
        for (int i = 1; i < plan[k].task && plan[k].kind != ArchitectureKind::scratch; ++i) {
          if (!runner.scratch[i]) {
            missing += (missing.empty() ? "" : ", ") + std::to_string(i);
          } else {
            sources.push_back(runner.scratch[i]);
          }
        }
      }
      RunRecord rec;
      if (!missing.empty()) {
        rec.task = plan[k].task;
        rec.architecture = std::string(transfer::to_string(plan[k].kind));
        rec.directory = runner.dir_of(plan[k]);
        rec.status = RunStatus::failed;
        rec.message = "scratch solution missing for task(s) " + missing;
        runner.log("task " + std::to_string(rec.task) + " " + rec.architecture + ": skipped, " +
                   rec.message);
      } else {
        rec = runner.execute(plan[k], sources);
      }
      {
        std::lock_guard lock(runner.mu);
        record.runs[k] = std::move(rec);
        state[k] = 2;
      }
      runner.cv.notify_all();
    }
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return record;
}

}  // namespace svt::tasks
