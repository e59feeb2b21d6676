#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "svt/checkpoint.hpp"
#include "svt/errors.hpp"
#include "svt/experiment.hpp"

using namespace svt;
using namespace svt::experiment;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("svt_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json smoke_doc(const std::string& name, json archs = {"scratch", "fine_tune", "a2t"}) {
  return {{"name", name},
          {"scenario", "gridworld"},
          {"setting", "learning_system"},
          {"preset", "desk"},
          {"num_tasks", 3},
          {"architectures", archs},
          {"master_seed", 5},
          {"dqn", {{"training_steps", 400}, {"eval_every", 100}, {"eval_episodes", 4}, {"batch_size", 16}}},
          {"system_dqn",
           {{"training_steps", 600}, {"eval_every", 300}, {"eval_episodes", 4}, {"batch_size", 16}}},
          {"metrics", {{"smoothing_width", 2}, {"near_optimal_window", 2}}}};
}

fs::path write_config(const fs::path& dir, const json& doc) {
  auto p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EnvLookup no_env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };

void write_curve(const fs::path& dir, const std::vector<double>& means) {
  dqn::LearningCurve c;
  for (std::size_t i = 0; i < means.size(); ++i) {
    c.records.push_back({1000 * static_cast<long>(i + 1), means[i], 0.0, 300});
  }
  fs::create_directories(dir);
  std::ofstream out(dir / "curve.csv");
  dqn::write_curve_csv(out, c);
}

int run_binary(const std::string& args, std::string& output) {
  const std::string cmd = std::string(SVT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = pclose(pipe);
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, FieldLevelDiagnostics) {
  json doc = {{"name", ""},
              {"scenario", "moon"},
              {"setting", "learning_system"},
              {"num_tasks", 0},
              {"architectures", {"scratch", "dueling"}},
              {"dqn", {{"batch_size", -1}}},
              {"colour", "blue"}};
  try {
    resolve(doc);
    FAIL();
  } catch (const InvalidConfig& e) {
    const std::string msg = e.what();
    for (const char* field : {"name", "scenario", "num_tasks", "architectures[1]", "dqn.batch_size", "colour"}) {
      EXPECT_NE(msg.find(field), std::string::npos) << field << "\n" << msg;
    }
  }
}

TEST(Config, PresetsResolve) {
  auto desk = resolve({{"name", "d"}, {"scenario", "gridworld"}, {"setting", "learning_system"}});
  EXPECT_EQ(desk.preset, Preset::desk);
  EXPECT_EQ(desk.dqn.training_steps, 200000);
  EXPECT_EQ(desk.dqn.learning_rate, 1e-3);
  EXPECT_EQ(desk.num_tasks, 10);
  EXPECT_EQ(desk.architectures.size(), 4u);
  auto paper = resolve({{"name", "p"}, {"scenario", "driving"}, {"setting", "comparable"}, {"preset", "paper"}});
  EXPECT_EQ(paper.dqn.training_steps, 3000000);
  EXPECT_EQ(paper.dqn.learning_rate, 5e-5);
  EXPECT_EQ(paper.dqn.target_update_freq, 3000);
  EXPECT_EQ(paper.num_tasks, 9);
  EXPECT_EQ(paper.metrics.smoothing_width, 20);
  EXPECT_EQ(paper.metrics.near_optimal_window, 100);
  auto gw = resolve({{"name", "p"}, {"scenario", "gridworld"}, {"setting", "comparable"}, {"preset", "paper"}});
  EXPECT_EQ(gw.num_tasks, 16);
  EXPECT_EQ(gw.dqn.learning_rate, 4e-5);
  EXPECT_EQ(config_hash(desk), config_hash(resolve(to_json(desk))));
}

TEST(Config, EnvironmentThenFlags) {
  json doc = smoke_doc("x");
  std::map<std::string, std::string> vars = {
      {"SVT_NAME", "from-env"}, {"SVT_SEED", "99"}, {"SVT_TRAINING_STEPS", "800"},
      {"SVT_PRESET", "paper"}, {"OTHER_SEED", "1"}};
  EnvLookup lookup = [&](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    return it == vars.end() ? std::nullopt : std::optional(it->second);
  };
  auto cfg = resolve(apply_overrides(doc, {}, lookup));
  EXPECT_EQ(cfg.name, "from-env");
  EXPECT_EQ(cfg.master_seed, 99u);
  EXPECT_EQ(cfg.dqn.training_steps, 800);
  EXPECT_EQ(cfg.preset, Preset::paper);
  Overrides flags;
  flags.seed = 7;
  flags.preset = "desk";
  flags.jobs = 3;
  auto cfg2 = resolve(apply_overrides(doc, flags, lookup));
  EXPECT_EQ(cfg2.master_seed, 7u);
  EXPECT_EQ(cfg2.preset, Preset::desk);
  EXPECT_EQ(cfg2.jobs, 3);
  vars["SVT_JOBS"] = "two";
  EXPECT_THROW(apply_overrides(doc, {}, lookup), InvalidConfig);
}

TEST(Config, ShippedConfigsResolve) {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(SVT_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().string());
    EXPECT_NO_THROW(load_config(entry.path(), {}, [](const std::string&) { return std::nullopt; }));
    ++seen;
  }
  EXPECT_GE(seen, 4);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/dir/cfg.json", {}, no_env);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/cfg.json"), std::string::npos);
  }
  std::ostringstream out, err;
  EXPECT_NE(cmd_run_sequence("/nonexistent/dir/cfg.json", {}, out, err), 0);
  EXPECT_NE(err.str().find("/nonexistent/dir/cfg.json"), std::string::npos);
}

TEST(Binary, MissingConfigAndInvalidConfig) {
  std::string output;
  EXPECT_NE(run_binary("run-sequence --config /nonexistent/x.json", output), 0);
  EXPECT_NE(output.find("/nonexistent/x.json"), std::string::npos) << output;
  auto dir = fresh_dir("bin");
  json bad = smoke_doc("bad");
  bad["num_tasks"] = -4;
  auto path = write_config(dir, bad);
  output.clear();
  EXPECT_EQ(run_binary("run-sequence --config " + path.string() + " --out " + dir.string(), output), 2);
  EXPECT_NE(output.find("num_tasks"), std::string::npos) << output;
}

TEST(Pipeline, SmokeRunResumeMetricsPlots) {
  auto dir = fresh_dir("smoke");
  auto path = write_config(dir, smoke_doc("smoke"));
  Overrides o;
  o.out = dir.string();
  o.jobs = 2;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run_sequence(path, o, out, err), 0) << err.str();
  const fs::path root = dir / "runs" / "smoke";
  int folders = 0;
  for (const auto& t : fs::directory_iterator(root)) {
    if (!t.is_directory() || t.path().filename().string().rfind("task", 0) != 0) continue;
    for (const auto& a : fs::directory_iterator(t.path())) {
      if (a.is_directory()) ++folders;
    }
  }
  EXPECT_EQ(folders, 7);

  const auto cfg = load_config(path, o, no_env);
  const auto hash = config_hash(cfg);
  EXPECT_NE(slurp(root / "task2" / "a2t" / "curve.csv").find(hash), std::string::npos);
  EXPECT_EQ(io::read_json_file(root / "experiment.json").at("config_hash"), hash);

  auto again = run_experiment(cfg);
  EXPECT_EQ(again.total_steps_trained(), 0);
  EXPECT_EQ(again.runs.size(), 7u);

  std::ostringstream m1, e1, m2, e2;
  ASSERT_EQ(cmd_metrics(root, m1, e1), 0) << e1.str();
  const auto summary = slurp(root / "metrics" / "summary.csv");
  ASSERT_EQ(cmd_metrics(root, m2, e2), 0);
  EXPECT_EQ(summary, slurp(root / "metrics" / "summary.csv"));
  EXPECT_EQ(m1.str(), m2.str());
  EXPECT_NE(summary.find("# config_hash " + hash), std::string::npos);
  EXPECT_TRUE(fs::exists(root / "metrics" / "task3_a2t.json"));
  EXPECT_EQ(io::read_json_file(root / "metrics" / "task2_fine_tune.json").at("config_hash"), hash);

  std::ostringstream p, pe;
  ASSERT_EQ(cmd_plot_data(root, p, pe), 0) << pe.str();
  std::ifstream js(root / "plots" / "jumpstart.csv");
  std::string line;
  std::getline(js, line);
  EXPECT_EQ(line.rfind("# config_hash", 0), 0u);
  std::getline(js, line);
  EXPECT_EQ(line, "task,fine_tune,a2t");
  for (const char* f : {"final_improvement.csv", "step_ratio.csv", "curves.csv"}) {
    EXPECT_TRUE(fs::exists(root / "plots" / f));
  }
}

TEST(Pipeline, TrainScratchWritesSingleRun) {
  auto dir = fresh_dir("scratch_cmd");
  json doc = smoke_doc("one");
  doc["num_tasks"] = 2;
  auto path = write_config(dir, doc);
  Overrides o;
  o.out = dir.string();
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train_scratch(path, o, 2, out, err), 0) << err.str();
  EXPECT_TRUE(fs::exists(dir / "train-scratch" / "one" / "task2" / "curve.csv"));
  EXPECT_NE(cmd_train_scratch(path, o, 5, out, err), 0);
}

TEST(Metrics, HandBuiltRunDirectory) {
  auto root = fresh_dir("fixture");
  write_curve(root / "task1" / "scratch", {1, 2, 3});
  write_curve(root / "task2" / "scratch", {1, 2, 4, 6, 6, 6});
  write_curve(root / "task2" / "a2t", {3, 5, 7, 7, 7, 7});
  write_curve(root / "task2" / "fine_tune", {0, 0, 1, 1, 1, 1});
  fs::create_directories(root / "task2" / "a2t_savt");
  auto outcome = compute_metrics(root, {1, 2, true});
  ASSERT_EQ(outcome.reports.size(), 2u);
  const auto& ft = outcome.reports[0];
  const auto& a2t = outcome.reports[1];
  EXPECT_EQ(ft.architecture, "fine_tune");
  EXPECT_EQ(*ft.jumpstart, -1.0);
  EXPECT_EQ(*ft.final_improvement, -1.0);
  EXPECT_FALSE(ft.step_ratio.has_value());
  EXPECT_EQ(a2t.architecture, "a2t");
  EXPECT_EQ(*a2t.jumpstart, 2.0);
  EXPECT_EQ(*a2t.final_improvement, 0.25);
  EXPECT_EQ(*a2t.step_ratio, 2.0 / 3.0);
  ASSERT_EQ(outcome.warnings.size(), 1u);
  EXPECT_NE(outcome.warnings[0].find("a2t_savt"), std::string::npos);

  auto files = write_plot_data(root, {1, 2, true});
  std::ifstream sr(root / "plots" / "step_ratio.csv");
  std::string header, row;
  std::getline(sr, header);
  std::getline(sr, header);
  std::getline(sr, row);
  EXPECT_EQ(header, "task,fine_tune,a2t");
  EXPECT_EQ(row, "2,," + metrics::format_value(2.0 / 3.0));
  std::ifstream summary(root / "metrics" / "summary.csv");
  auto back = metrics::read_summary_csv(summary);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back[1].step_ratio, 2.0 / 3.0);
}

TEST(Metrics, ScratchOnlyDirectoryWarns) {
  auto root = fresh_dir("scratch_only");
  write_curve(root / "task1" / "scratch", {1, 2});
  write_curve(root / "task2" / "scratch", {1, 2});
  std::ostringstream out, err;
  EXPECT_EQ(cmd_metrics(root, out, err), 0);
  EXPECT_NE(err.str().find("warning"), std::string::npos);
  EXPECT_EQ(out.str(), "task,architecture,jumpstart,final_improvement,step_ratio\n");
}
