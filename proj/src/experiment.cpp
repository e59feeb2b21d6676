#include "svt/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "svt/checkpoint.hpp"
#include "svt/errors.hpp"

namespace svt::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using transfer::ArchitectureKind;

namespace {

constexpr const char* kDeskMap =
    "....2\n"
    ".#...\n"
    "...#.\n"
    ".#...\n"
    "1....\n";

constexpr const char* kPaperMap =
    "........#3\n"
    ".##.......\n"
    "......#...\n"
    "..#.......\n"
    "....##....\n"
    ".......#..\n"
    ".#........\n"
    "...#....#.\n"
    "......#...\n"
    "1........2\n";

const std::vector<ArchitectureKind> kAllKinds = {ArchitectureKind::scratch,
                                                 ArchitectureKind::fine_tune, ArchitectureKind::a2t,
                                                 ArchitectureKind::a2t_savt};

std::string preset_name(Preset p) { return p == Preset::desk ? "desk" : "paper"; }

ExperimentConfig preset_defaults(Preset preset, tasks::Scenario scenario, tasks::Setting setting) {
  ExperimentConfig c;
  c.preset = preset;
  c.scenario = scenario;
  c.setting = setting;
  c.architectures = kAllKinds;
  const bool paper = preset == Preset::paper;
  if (paper) {
    c.dqn = scenario == tasks::Scenario::gridworld ? dqn::DqnConfig::paper_gridworld()
                                                   : dqn::DqnConfig::paper_driving();
    c.system_dqn = dqn::DqnConfig::paper_gridworld();
    c.system_dqn.training_steps = 1000000;
    c.system_dqn.eval_every = 100000;
    c.grid = env::GridworldConfig::from_ascii(kPaperMap);
    c.metrics = metrics::MetricOptions{};
  } else {
    c.dqn = dqn::DqnConfig::desk();
    c.system_dqn = dqn::DqnConfig::desk();
    c.system_dqn.training_steps = 100000;
    c.system_dqn.eval_every = 10000;
    c.grid = env::GridworldConfig::from_ascii(kDeskMap);
    c.layout.width = 5;
    c.layout.height = 5;
    c.selection.eval_episodes = 100;
    c.metrics.smoothing_width = 10;
    c.metrics.near_optimal_window = 40;
  }
  if (scenario == tasks::Scenario::gridworld) {
    c.num_tasks = setting == tasks::Setting::comparable ? 16 : 10;
  } else {
    c.num_tasks = setting == tasks::Setting::comparable ? 9 : 10;
  }
  return c;
}

class Errors {
 public:
  void add(const std::string& field, const std::string& message) {
    lines_.push_back(field + ": " + message);
  }
  void add(const std::string& message) { lines_.push_back(message); }
  bool empty() const { return lines_.empty(); }
  void raise() const {
    if (lines_.empty()) return;
    std::string all;
    for (const auto& l : lines_) all += (all.empty() ? "" : "\n") + l;
    throw InvalidConfig(all);
  }

 private:
  std::vector<std::string> lines_;
};

template <class T>
bool read_field(const json& raw, const char* key, T& out, Errors& errors) {
  if (!raw.contains(key)) return false;
  try {
    raw.at(key).get_to(out);
    return true;
  } catch (const json::exception&) {
    errors.add(key, "has the wrong type");
    return false;
  }
}

env::GridworldConfig merge_grid(const json& j, env::GridworldConfig cfg, Errors& errors) {
  static const std::set<std::string> known = {"map",   "width",     "height",    "walls",
                                              "goals", "slip_prob", "max_steps", "seed"};
  if (!j.is_object()) {
    errors.add("env", "expected an object");
    return cfg;
  }
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) errors.add("env." + key, "unknown key for the gridworld scenario");
  }
  try {
    if (j.contains("map")) {
      cfg = env::GridworldConfig::from_ascii(j.at("map").get<std::string>());
    } else if (j.contains("width") || j.contains("height") || j.contains("walls") ||
               j.contains("goals")) {
      json full = env::to_json(cfg);
      for (const char* k : {"width", "height", "walls", "goals"}) {
        if (j.contains(k)) full[k] = j.at(k);
      }
      cfg = env::gridworld_from_json(full);
    }
    if (j.contains("slip_prob")) cfg.slip_prob = j.at("slip_prob").get<double>();
    if (j.contains("max_steps")) cfg.max_steps = j.at("max_steps").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
  } catch (const json::exception& e) {
    errors.add("env", e.what());
  } catch (const Error& e) {
    errors.add("env", e.what());
  }
  return cfg;
}

json layout_to_json(const tasks::LayoutOptions& l) {
  return {{"width", l.width},         {"height", l.height},     {"wall_prob", l.wall_prob},
          {"min_goals", l.min_goals}, {"max_goals", l.max_goals}, {"goal_values", l.goal_values},
          {"max_attempts", l.max_attempts}};
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json archs = json::array();
  for (auto k : c.architectures) archs.push_back(std::string(transfer::to_string(k)));
  json j{{"name", c.name},
         {"scenario", tasks::to_string(c.scenario)},
         {"setting", tasks::to_string(c.setting)},
         {"num_tasks", c.num_tasks},
         {"architectures", archs},
         {"preset", preset_name(c.preset)},
         {"master_seed", c.master_seed},
         {"dqn", dqn::to_json(c.dqn)},
         {"transform_noise", c.transform_noise},
         {"metrics",
          {{"smoothing_width", c.metrics.smoothing_width},
           {"near_optimal_window", c.metrics.near_optimal_window},
           {"population_std", c.metrics.population_std}}}};
  if (c.scenario == tasks::Scenario::gridworld) {
    j["env"] = env::to_json(c.grid);
    if (c.setting == tasks::Setting::learning_system) j["system_dqn"] = dqn::to_json(c.system_dqn);
    if (c.setting == tasks::Setting::comparable) j["layout"] = layout_to_json(c.layout);
  } else {
    j["env"] = env::to_json(c.driving);
    if (c.setting == tasks::Setting::comparable) {
      j["selection"] = {{"population", c.selection.population},
                        {"ratio", c.selection.ratio},
                        {"screening_fraction", c.selection.screening_fraction},
                        {"eval_episodes", c.selection.eval_episodes}};
    }
  }
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return io::hex64(fnv1a64(to_json(cfg).dump()));
}

ExperimentConfig resolve(const json& raw) {
  Errors errors;
  if (!raw.is_object()) throw InvalidConfig("config: expected a JSON object");
  static const std::set<std::string> known = {
      "name", "scenario", "setting",   "num_tasks", "architectures", "preset",     "master_seed",
      "output_dir", "jobs", "dqn",     "system_dqn", "env",          "layout",     "selection",
      "metrics", "transform_noise"};
  for (const auto& [key, value] : raw.items()) {
    if (!known.contains(key)) errors.add(key, "unknown field");
  }

  Preset preset = Preset::desk;
  std::string text;
  if (read_field(raw, "preset", text, errors)) {
    if (text == "paper") preset = Preset::paper;
    else if (text != "desk") errors.add("preset", "expected \"desk\" or \"paper\", got \"" + text + "\"");
  }
  tasks::Scenario scenario = tasks::Scenario::gridworld;
  if (!raw.contains("scenario")) {
    errors.add("scenario", "required (gridworld or driving)");
  } else if (read_field(raw, "scenario", text, errors)) {
    try {
      scenario = tasks::scenario_from_string(text);
    } catch (const InvalidConfig& e) {
      errors.add("scenario", e.what());
    }
  }
  tasks::Setting setting = tasks::Setting::learning_system;
  if (!raw.contains("setting")) {
    errors.add("setting", "required (learning_system or comparable)");
  } else if (read_field(raw, "setting", text, errors)) {
    try {
      setting = tasks::setting_from_string(text);
    } catch (const InvalidConfig& e) {
      errors.add("setting", e.what());
    }
  }

  ExperimentConfig c = preset_defaults(preset, scenario, setting);
  if (!raw.contains("name")) {
    errors.add("name", "required");
  } else if (read_field(raw, "name", c.name, errors)) {
    if (c.name.empty()) errors.add("name", "must be nonempty");
    if (c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..") {
      errors.add("name", "must be a plain directory name");
    }
  }
  if (read_field(raw, "num_tasks", c.num_tasks, errors) && c.num_tasks < 1) {
    errors.add("num_tasks", "must be >= 1");
  }
  if (setting == tasks::Setting::comparable && c.num_tasks < 2) {
    errors.add("num_tasks", "comparable sequences need at least 2 tasks");
  }
  read_field(raw, "master_seed", c.master_seed, errors);
  if (read_field(raw, "output_dir", text, errors)) c.output_dir = text;
  if (read_field(raw, "jobs", c.jobs, errors) && c.jobs < 1) errors.add("jobs", "must be >= 1");
  if (read_field(raw, "transform_noise", c.transform_noise, errors) && !(c.transform_noise >= 0)) {
    errors.add("transform_noise", "must be >= 0");
  }

  if (raw.contains("architectures")) {
    const auto& a = raw.at("architectures");
    if (!a.is_array() || a.empty()) {
      errors.add("architectures", "expected a nonempty list");
    } else {
      c.architectures.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string field = "architectures[" + std::to_string(i) + "]";
        if (!a[i].is_string()) {
          errors.add(field, "expected a string");
          continue;
        }
        try {
          const auto kind = transfer::architecture_from_string(a[i].get<std::string>());
          if (std::find(c.architectures.begin(), c.architectures.end(), kind) !=
              c.architectures.end()) {
            errors.add(field, "duplicate architecture");
          }
          c.architectures.push_back(kind);
        } catch (const InvalidConfig& e) {
          errors.add(field, e.what());
        }
      }
    }
  }

  auto dqn_section = [&](const char* key, dqn::DqnConfig& target) {
    if (!raw.contains(key)) return;
    try {
      target = dqn::dqn_config_from_json(raw.at(key), target);
    } catch (const InvalidConfig& e) {
      std::string msg = e.what();
      if (msg.rfind("dqn", 0) == 0) msg = std::string(key) + msg.substr(3);
      errors.add(msg);
    }
  };
  dqn_section("dqn", c.dqn);
  dqn_section("system_dqn", c.system_dqn);
  if (raw.contains("system_dqn") &&
      !(scenario == tasks::Scenario::gridworld && setting == tasks::Setting::learning_system)) {
    errors.add("system_dqn", "only used by the gridworld learning_system setting");
  }

  if (raw.contains("env")) {
    if (scenario == tasks::Scenario::gridworld) {
      c.grid = merge_grid(raw.at("env"), c.grid, errors);
    } else {
      try {
        c.driving = env::driving_from_json(raw.at("env"), c.driving);
      } catch (const InvalidConfig& e) {
        std::string msg = e.what();
        if (msg.rfind("driving", 0) == 0) msg = "env" + msg.substr(7);
        errors.add(msg);
      } catch (const json::exception& e) {
        errors.add("env", e.what());
      }
    }
  }

  if (raw.contains("layout")) {
    const auto& l = raw.at("layout");
    static const std::set<std::string> keys = {"width",     "height",      "wall_prob",
                                               "min_goals", "max_goals",   "goal_values",
                                               "max_attempts"};
    if (!l.is_object()) {
      errors.add("layout", "expected an object");
    } else {
      for (const auto& [key, value] : l.items()) {
        if (!keys.contains(key)) errors.add("layout." + key, "unknown key");
      }
      try {
        c.layout.width = l.value("width", c.layout.width);
        c.layout.height = l.value("height", c.layout.height);
        c.layout.wall_prob = l.value("wall_prob", c.layout.wall_prob);
        c.layout.min_goals = l.value("min_goals", c.layout.min_goals);
        c.layout.max_goals = l.value("max_goals", c.layout.max_goals);
        c.layout.goal_values = l.value("goal_values", c.layout.goal_values);
        c.layout.max_attempts = l.value("max_attempts", c.layout.max_attempts);
      } catch (const json::exception& e) {
        errors.add("layout", e.what());
      }
      if (c.layout.width < 1 || c.layout.height < 1) errors.add("layout", "board must be nonempty");
      if (!(c.layout.wall_prob >= 0.0 && c.layout.wall_prob < 1.0)) {
        errors.add("layout.wall_prob", "must lie in [0, 1)");
      }
      if (c.layout.min_goals < 1 || c.layout.max_goals < c.layout.min_goals) {
        errors.add("layout", "need 1 <= min_goals <= max_goals");
      }
      if (c.layout.goal_values.empty()) errors.add("layout.goal_values", "must be nonempty");
    }
  }
  c.layout.slip_prob = c.grid.slip_prob;
  c.layout.max_steps = c.grid.max_steps;

  if (raw.contains("selection")) {
    const auto& s = raw.at("selection");
    static const std::set<std::string> keys = {"population", "ratio", "screening_fraction",
                                               "eval_episodes"};
    if (!s.is_object()) {
      errors.add("selection", "expected an object");
    } else {
      for (const auto& [key, value] : s.items()) {
        if (!keys.contains(key)) errors.add("selection." + key, "unknown key");
      }
      try {
        c.selection.population = s.value("population", c.selection.population);
        c.selection.ratio = s.value("ratio", c.selection.ratio);
        c.selection.screening_fraction =
            s.value("screening_fraction", c.selection.screening_fraction);
        c.selection.eval_episodes = s.value("eval_episodes", c.selection.eval_episodes);
      } catch (const json::exception& e) {
        errors.add("selection", e.what());
      }
      if (!(c.selection.screening_fraction > 0.0 && c.selection.screening_fraction <= 1.0)) {
        errors.add("selection.screening_fraction", "must lie in (0, 1]");
      }
      if (c.selection.eval_episodes < 1) errors.add("selection.eval_episodes", "must be >= 1");
    }
  }
  if (scenario == tasks::Scenario::driving && setting == tasks::Setting::comparable &&
      c.selection.population < c.num_tasks) {
    errors.add("selection.population", "must be at least num_tasks");
  }

  if (raw.contains("metrics")) {
    const auto& m = raw.at("metrics");
    if (!m.is_object()) {
      errors.add("metrics", "expected an object");
    } else {
      for (const auto& [key, value] : m.items()) {
        if (key != "smoothing_width" && key != "near_optimal_window" && key != "population_std") {
          errors.add("metrics." + key, "unknown key");
        }
      }
      try {
        c.metrics.smoothing_width = m.value("smoothing_width", c.metrics.smoothing_width);
        c.metrics.near_optimal_window = m.value("near_optimal_window", c.metrics.near_optimal_window);
        c.metrics.population_std = m.value("population_std", c.metrics.population_std);
      } catch (const json::exception& e) {
        errors.add("metrics", e.what());
      }
      if (c.metrics.smoothing_width < 1) errors.add("metrics.smoothing_width", "must be >= 1");
      if (c.metrics.near_optimal_window < 1) {
        errors.add("metrics.near_optimal_window", "must be >= 1");
      }
    }
  }
  errors.raise();
  return c;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

long parse_integer(const std::string& name, const std::string& text) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig(name + ": expected an integer, got \"" + text + "\"");
  }
}

std::uint64_t parse_unsigned(const std::string& name, const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig(name + ": expected a non-negative integer, got \"" + text + "\"");
  }
}

}  // namespace

json apply_overrides(json raw, const Overrides& o, const EnvLookup& lookup) {
  if (!raw.is_object()) throw InvalidConfig("config: expected a JSON object");
  const std::string p = kEnvPrefix;
  if (lookup) {
    if (auto v = lookup(p + "NAME")) raw["name"] = *v;
    if (auto v = lookup(p + "PRESET")) raw["preset"] = *v;
    if (auto v = lookup(p + "SEED")) raw["master_seed"] = parse_unsigned(p + "SEED", *v);
    if (auto v = lookup(p + "OUT")) raw["output_dir"] = *v;
    if (auto v = lookup(p + "JOBS")) raw["jobs"] = parse_integer(p + "JOBS", *v);
    if (auto v = lookup(p + "NUM_TASKS")) raw["num_tasks"] = parse_integer(p + "NUM_TASKS", *v);
    if (auto v = lookup(p + "TRAINING_STEPS")) {
      raw["dqn"]["training_steps"] = parse_integer(p + "TRAINING_STEPS", *v);
    }
    if (auto v = lookup(p + "EVAL_EPISODES")) {
      raw["dqn"]["eval_episodes"] = parse_integer(p + "EVAL_EPISODES", *v);
    }
  }
  if (o.preset) raw["preset"] = *o.preset;
  if (o.seed) raw["master_seed"] = *o.seed;
  if (o.out) raw["output_dir"] = *o.out;
  if (o.jobs) raw["jobs"] = *o.jobs;
  return raw;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides,
                             const EnvLookup& lookup) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  json raw;
  try {
    raw = json::parse(io::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidConfig("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return resolve(apply_overrides(std::move(raw), overrides, lookup));
}

// ---------------------------------------------------------------------------

namespace {

void say(const std::function<void(const std::string&)>& log, const std::string& line) {
  if (log) log(line);
}

std::unique_ptr<dqn::QArchitecture> train_screening(const ExperimentConfig& cfg,
                                                    const tasks::TaskSpec& task, int candidate) {
  dqn::DqnConfig d = cfg.dqn;
  d.training_steps = std::max<long>(
      d.batch_size, static_cast<long>(cfg.selection.screening_fraction *
                                      static_cast<double>(cfg.dqn.training_steps)));
  d.eval_every = d.training_steps;
  d.eval_episodes = 1;
  d.seed = derive_seed(cfg.master_seed, seed_tag("screen"), static_cast<std::uint64_t>(candidate));
  Rng init(derive_seed(d.seed, seed_tag("init")));
  auto arch = transfer::build_architecture(ArchitectureKind::scratch, {}, task.state_dim(),
                                           task.num_actions(), init);
  dqn::train(task.factory(), *arch, d);
  return arch;
}

}  // namespace

std::vector<tasks::TaskSpec> prepare_tasks(const ExperimentConfig& cfg,
                                           const std::function<void(const std::string&)>& log) {
  const fs::path file = cfg.run_root() / "tasks.json";
  const std::string hash = config_hash(cfg);
  if (fs::exists(file)) {
    try {
      const json doc = io::read_json_file(file);
      if (doc.at("config_hash").get<std::string>() == hash) {
        std::vector<tasks::TaskSpec> out;
        for (const auto& t : doc.at("tasks")) out.push_back(tasks::task_from_json(t));
        say(log, "loaded " + std::to_string(out.size()) + " tasks from " + file.string());
        return out;
      }
    } catch (const std::exception& e) {
      say(log, std::string("ignoring unreadable ") + file.string() + ": " + e.what());
    }
  }

  std::vector<tasks::TaskSpec> out;
  using tasks::Scenario;
  using tasks::Setting;
  if (cfg.scenario == Scenario::gridworld && cfg.setting == Setting::learning_system) {
    dqn::DqnConfig sys = cfg.system_dqn;
    sys.seed = derive_seed(cfg.master_seed, seed_tag("system"));
    say(log, "training " + std::to_string(cfg.num_tasks) + " system checkpoints over " +
                 std::to_string(sys.training_steps) + " steps");
    out = tasks::build_gw_learning_sequence(cfg.grid, sys, cfg.num_tasks);
  } else if (cfg.scenario == Scenario::gridworld) {
    Rng rng(derive_seed(cfg.master_seed, seed_tag("layouts")));
    out = tasks::build_gw_comparable_sequence(cfg.num_tasks, rng, cfg.layout);
  } else if (cfg.setting == Setting::learning_system) {
    out = tasks::build_ad_learning_sequence(cfg.driving, cfg.num_tasks);
  } else {
    Rng rng(derive_seed(cfg.master_seed, seed_tag("blind-spots")));
    tasks::ComparableDrivingOptions opt;
    opt.population = cfg.selection.population;
    opt.keep = cfg.num_tasks;
    opt.ratio = cfg.selection.ratio;
    opt.eval_episodes = cfg.selection.eval_episodes;
    opt.eval_seed = derive_seed(cfg.master_seed, seed_tag("screen-eval"));
    say(log, "screening " + std::to_string(opt.population) + " candidate blind spots");
    out = tasks::build_ad_comparable_sequence(
        cfg.driving, rng,
        [&](const tasks::TaskSpec& t, int c) { return train_screening(cfg, t, c); }, opt);
  }
  json doc{{"config_hash", hash}, {"tasks", json::array()}};
  for (const auto& t : out) doc["tasks"].push_back(tasks::to_json(t));
  fs::create_directories(cfg.run_root());
  io::write_json_file(file, doc);
  return out;
}

tasks::ExperimentRecord run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const std::string&)>& log) {
  fs::create_directories(cfg.run_root());
  json doc = to_json(cfg);
  doc["config_hash"] = config_hash(cfg);
  io::write_json_file(cfg.run_root() / "experiment.json", doc);

  const auto task_list = prepare_tasks(cfg, log);
  tasks::SequenceOptions opt;
  opt.root = cfg.run_root();
  opt.architectures = cfg.architectures;
  opt.dqn = cfg.dqn;
  opt.master_seed = cfg.master_seed;
  opt.jobs = cfg.jobs;
  opt.config_hash = config_hash(cfg);
  opt.build.transform_noise = cfg.transform_noise;
  opt.log = log;
  auto record = tasks::run_sequence(task_list, opt);

  json runs = json::array();
  for (const auto& r : record.runs) {
    runs.push_back({{"task", r.task},
                    {"architecture", r.architecture},
                    {"status", tasks::to_string(r.status)},
                    {"steps_trained", r.steps_trained},
                    {"message", r.message}});
  }
  io::write_json_file(cfg.run_root() / "record.json",
                      {{"config_hash", opt.config_hash}, {"runs", runs}});
  return record;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kTransferNames = {"fine_tune", "a2t", "a2t_savt"};

std::optional<dqn::LearningCurve> read_curve(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  return dqn::read_curve_csv(in);
}

int count_tasks(const fs::path& run_dir) {
  int n = 0;
  while (fs::is_directory(run_dir / ("task" + std::to_string(n + 1)))) ++n;
  return n;
}

std::string provenance(const fs::path& run_dir) {
  try {
    return io::read_json_file(run_dir / "experiment.json").at("config_hash").get<std::string>();
  } catch (const std::exception&) {
    return "";
  }
}

metrics::MetricOptions stored_options(const fs::path& run_dir, metrics::MetricOptions fallback) {
  try {
    const auto m = io::read_json_file(run_dir / "experiment.json").at("metrics");
    fallback.smoothing_width = m.at("smoothing_width").get<int>();
    fallback.near_optimal_window = m.at("near_optimal_window").get<int>();
    fallback.population_std = m.at("population_std").get<bool>();
  } catch (const std::exception&) {
  }
  return fallback;
}

}  // namespace

MetricsOutcome compute_metrics(const fs::path& run_dir, const metrics::MetricOptions& options) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir.string());
  MetricsOutcome out;
  const int n = count_tasks(run_dir);
  for (int i = 2; i <= n; ++i) {
    const fs::path tdir = run_dir / ("task" + std::to_string(i));
    std::optional<dqn::LearningCurve> ref;
    try {
      ref = read_curve(tdir / "scratch" / "curve.csv");
    } catch (const std::exception& e) {
      out.warnings.push_back("task " + std::to_string(i) + ": unreadable scratch curve: " + e.what());
      continue;
    }
    if (!ref || ref->records.empty()) {
      out.warnings.push_back("task " + std::to_string(i) +
                             ": scratch curve missing; transfer runs skipped");
      continue;
    }
    for (const auto& arch : kTransferNames) {
      if (!fs::is_directory(tdir / arch)) continue;
      std::optional<dqn::LearningCurve> curve;
      try {
        curve = read_curve(tdir / arch / "curve.csv");
      } catch (const std::exception& e) {
        out.warnings.push_back("task " + std::to_string(i) + " " + arch + ": unreadable curve: " +
                               e.what());
        continue;
      }
      if (!curve || curve->records.empty()) {
        out.warnings.push_back("task " + std::to_string(i) + " " + arch + ": curve missing");
        continue;
      }
      out.reports.push_back(metrics::compute_report(i, arch, *curve, *ref, options));
    }
  }
  if (out.reports.empty()) out.warnings.push_back("no transfer runs found; the report is empty");

  const fs::path mdir = run_dir / "metrics";
  fs::create_directories(mdir);
  const std::string hash = provenance(run_dir);
  for (const auto& r : out.reports) {
    json doc = metrics::to_json(r);
    doc["config_hash"] = hash;
    io::write_json_file(mdir / ("task" + std::to_string(r.task) + "_" + r.architecture + ".json"),
                        doc);
  }
  std::ostringstream csv;
  csv << "# config_hash " << hash << "\n";
  metrics::write_summary_csv(csv, out.reports);
  io::write_text_file(mdir / "summary.csv", csv.str());
  return out;
}

std::vector<fs::path> write_plot_data(const fs::path& run_dir,
                                      const metrics::MetricOptions& options) {
  const fs::path summary = run_dir / "metrics" / "summary.csv";
  if (!fs::exists(summary)) {
    throw IoError("no metrics in " + run_dir.string() + "; run the metrics command first");
  }
  std::ifstream in(summary);
  const auto reports = metrics::read_summary_csv(in);
  const std::string hash = provenance(run_dir);

  std::vector<std::string> present;
  for (const auto& a : kTransferNames) {
    if (std::any_of(reports.begin(), reports.end(),
                    [&](const auto& r) { return r.architecture == a; })) {
      present.push_back(a);
    }
  }
  std::set<int> task_ids;
  for (const auto& r : reports) task_ids.insert(r.task);
  auto find = [&](int task, const std::string& arch) -> const metrics::TransferReport* {
    for (const auto& r : reports) {
      if (r.task == task && r.architecture == arch) return &r;
    }
    return nullptr;
  };

  const fs::path pdir = run_dir / "plots";
  fs::create_directories(pdir);
  std::vector<fs::path> written;
  auto table = [&](const std::string& file, const std::vector<std::string>& archs,
                   std::optional<double> metrics::TransferReport::*field) {
    std::ostringstream t;
    t << "# config_hash " << hash << "\ntask";
    for (const auto& a : archs) t << ',' << a;
    t << '\n';
    for (int task : task_ids) {
      t << task;
      for (const auto& a : archs) {
        const auto* r = find(task, a);
        t << ',' << (r ? metrics::format_value(r->*field) : "");
      }
      t << '\n';
    }
    io::write_text_file(pdir / file, t.str());
    written.push_back(pdir / file);
  };
  std::vector<std::string> jump;
  for (const auto& a : present) {
    if (a == "fine_tune" || a == "a2t") jump.push_back(a);
  }
  table("jumpstart.csv", jump, &metrics::TransferReport::jumpstart);
  table("final_improvement.csv", present, &metrics::TransferReport::final_improvement);
  table("step_ratio.csv", present, &metrics::TransferReport::step_ratio);

  std::ostringstream curves;
  curves << "# config_hash " << hash << "\ntask,architecture,train_step,mean_return,smoothed\n";
  const int n = count_tasks(run_dir);
  for (int i = 1; i <= n; ++i) {
    for (const std::string arch : {"scratch", "fine_tune", "a2t", "a2t_savt"}) {
      std::optional<dqn::LearningCurve> c;
      try {
        c = read_curve(run_dir / ("task" + std::to_string(i)) / arch / "curve.csv");
      } catch (const std::exception&) {
        continue;
      }
      if (!c || c->records.empty()) continue;
      const auto s = metrics::smooth(*c, options.smoothing_width);
      for (std::size_t k = 0; k < s.values.size(); ++k) {
        curves << i << ',' << arch << ',' << s.steps[k] << ','
               << metrics::format_value(c->records[k].mean_return) << ','
               << metrics::format_value(s.values[k]) << '\n';
      }
    }
  }
  io::write_text_file(pdir / "curves.csv", curves.str());
  written.push_back(pdir / "curves.csv");
  return written;
}

// ---------------------------------------------------------------------------

namespace {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const InvalidConfig& e) {
    err << "invalid config:\n" << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_run_sequence(const fs::path& config, const Overrides& overrides, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(config, overrides);
    out << "experiment " << cfg.name << " (" << config_hash(cfg) << ") -> "
        << cfg.run_root().string() << "\n";
    const auto record = run_experiment(cfg, [&](const std::string& line) { out << line << "\n"; });
    int failed = 0;
    for (const auto& r : record.runs) {
      if (r.status == tasks::RunStatus::failed) {
        ++failed;
        err << "task " << r.task << " " << r.architecture << " failed: " << r.message << "\n";
      }
    }
    out << record.runs.size() << " runs, " << failed << " failed, "
        << record.total_steps_trained() << " training steps executed\n";
    return failed ? 1 : 0;
  });
}

int cmd_metrics(const fs::path& run_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto outcome = compute_metrics(run_dir, stored_options(run_dir, {}));
    for (const auto& w : outcome.warnings) err << "warning: " << w << "\n";
    metrics::write_summary_csv(out, outcome.reports);
    return 0;
  });
}

int cmd_plot_data(const fs::path& run_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    for (const auto& p : write_plot_data(run_dir, stored_options(run_dir, {}))) {
      out << p.string() << "\n";
    }
    return 0;
  });
}

int cmd_train_scratch(const fs::path& config, const Overrides& overrides, int task,
                      std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(config, overrides);
    const auto task_list = prepare_tasks(cfg, [&](const std::string& l) { out << l << "\n"; });
    if (task < 1 || task > static_cast<int>(task_list.size())) {
      throw InvalidConfig("task: must lie in 1.." + std::to_string(task_list.size()));
    }
    const auto& spec = task_list[task - 1];
    dqn::DqnConfig d = cfg.dqn;
    d.seed = tasks::run_seed(cfg.master_seed, task, ArchitectureKind::scratch);
    Rng init(derive_seed(d.seed, seed_tag("init")));
    auto arch = transfer::build_architecture(ArchitectureKind::scratch, {}, spec.state_dim(),
                                             spec.num_actions(), init);
    const auto result = dqn::train(spec.factory(), *arch, d);
    const fs::path dir = cfg.output_dir / "train-scratch" / cfg.name / ("task" + std::to_string(task));
    fs::create_directories(dir);
    std::ostringstream csv;
    dqn::write_curve_csv(csv, result.curve, {"config_hash " + config_hash(cfg)});
    io::write_text_file(dir / "curve.csv", csv.str());
    io::write_json_file(dir / "checkpoint.json",
                        transfer::save_architecture(*arch, {d.seed, d.training_steps,
                                                            config_hash(cfg)}));
    out << "episodes " << result.episodes << ", failures " << result.failures_discovered;
    if (!result.curve.records.empty()) {
      out << ", final mean return " << result.curve.records.back().mean_return;
    }
    out << "\nwrote " << dir.string() << "\n";
    return 0;
  });
}

}  // namespace svt::experiment
