#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "svt/checkpoint.hpp"
#include "svt/errors.hpp"
#include "svt/tasks.hpp"

using namespace svt;
using namespace svt::tasks;
using transfer::ArchitectureKind;
namespace fs = std::filesystem;

namespace {

const char* kMap =
    "...2\n"
    ".#..\n"
    "....\n"
    "1...\n";

std::vector<nn::Mlp> random_checkpoints(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<nn::Mlp> out;
  for (int i = 0; i < n; ++i) out.push_back(nn::Mlp::xavier({4, 8, 9}, rng));
  return out;
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("svt_tasks_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SequenceOptions small_options(const fs::path& root, std::vector<ArchitectureKind> archs) {
  SequenceOptions o;
  o.root = root;
  o.architectures = std::move(archs);
  o.dqn.training_steps = 400;
  o.dqn.eval_every = 100;
  o.dqn.eval_episodes = 4;
  o.dqn.batch_size = 16;
  o.dqn.target_update_freq = 100;
  o.master_seed = 17;
  o.config_hash = "test";
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(GwLearning, TenTasksSharedLayout) {
  auto cfg = env::GridworldConfig::from_ascii(kMap);
  auto ck = random_checkpoints(10, 1);
  auto seq = build_gw_learning_sequence(cfg, ck, 10);
  ASSERT_EQ(seq.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(seq[i].index, i + 1);
    EXPECT_EQ(seq[i].grid, cfg);
    EXPECT_TRUE(std::get<nn::Mlp>(seq[i].system) == ck[i]);
    EXPECT_EQ(seq[i].state_dim(), 4);
    EXPECT_EQ(seq[i].num_actions(), 9);
  }
  EXPECT_THROW(build_gw_learning_sequence(cfg, random_checkpoints(9, 1), 10), InvalidConfig);
}

TEST(GwComparable, LayoutsConnectedDistinctReproducible) {
  LayoutOptions o;
  o.width = o.height = 5;
  Rng a(3), b(3);
  auto s1 = build_gw_comparable_sequence(16, a, o);
  auto s2 = build_gw_comparable_sequence(16, b, o);
  ASSERT_EQ(s1.size(), 16u);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const auto& g = s1[i].grid;
    EXPECT_TRUE(g.connected());
    EXPECT_GE(g.goal_rewards.size(), 2u);
    EXPECT_LE(g.goal_rewards.size(), 4u);
    for (const auto& [c, r] : g.goal_rewards) {
      EXPECT_TRUE(r == 1.0 || r == 2.0 || r == 3.0);
      EXPECT_FALSE(g.is_wall(c));
    }
    EXPECT_GE(g.start_cells().size(), 2u);
    EXPECT_EQ(g, s2[i].grid);
    EXPECT_EQ(std::get<sut::TabularPolicy>(s1[i].system), sut::value_iteration(g, {}));
    for (std::size_t j = 0; j < i; ++j) {
      EXPECT_FALSE(g.walls == s1[j].grid.walls && g.goal_rewards == s1[j].grid.goal_rewards);
    }
  }
  EXPECT_THROW(build_gw_comparable_sequence(1, a, o), InvalidConfig);
}

TEST(GwComparable, ImpossibleLayoutsRejected) {
  LayoutOptions o;
  o.width = o.height = 4;
  o.wall_prob = 1.0;
  o.max_attempts = 10;
  Rng rng(0);
  EXPECT_THROW(sample_layout(o, rng), LayoutError);
}

TEST(AdLearning, WidthsAndDirection) {
  auto seq = build_ad_learning_sequence();
  ASSERT_EQ(seq.size(), 10u);
  EXPECT_DOUBLE_EQ(seq[0].driving.blind_spot_width_deg, 30.0);
  EXPECT_DOUBLE_EQ(seq[9].driving.blind_spot_width_deg, 6.0);
  EXPECT_NEAR(seq[1].driving.blind_spot_width_deg, 30.0 - 24.0 / 9.0, 1e-12);
  EXPECT_NEAR(seq[1].driving.blind_spot_width_deg, 27.333, 1e-3);
  for (const auto& t : seq) {
    EXPECT_EQ(t.driving.blind_spot_direction_deg, 20.0);
    EXPECT_EQ(t.state_dim(), 6);
    EXPECT_EQ(t.num_actions(), 5);
  }
}

TEST(AdComparable, BlindSpotRanges) {
  Rng rng(5);
  auto spots = sample_blind_spots(30, rng);
  ASSERT_EQ(spots.size(), 30u);
  for (const auto& s : spots) {
    EXPECT_GE(s.direction, -30.0);
    EXPECT_LE(s.direction, 30.0);
    EXPECT_GE(s.width, 3.0);
    EXPECT_LE(s.width, 9.0);
  }
}

TEST(SelectDissimilar, GreedyInCandidateOrder) {
  // 0 and 1 are alike, 2 and 3 differ from everyone
  const double m[4][4] = {{1.0, 0.9, 0.1, 0.1}, {0.9, 1.0, 0.1, 0.1}, {0.1, 0.1, 1.0, 0.2},
                          {0.1, 0.1, 0.2, 1.0}};
  CrossScore score = [&](int i, int j) { return m[i][j]; };
  EXPECT_EQ(select_dissimilar(4, 3, score), (std::vector<int>{0, 2, 3}));
  try {
    select_dissimilar(4, 4, score);
    FAIL();
  } catch (const SelectionError& e) {
    EXPECT_EQ(e.achieved(), 3);
  }
}

TEST(SelectDissimilar, SelectedSetsPassPairwiseCriterion) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 30;
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    for (auto& row : m) {
      for (auto& v : row) v = uniform(rng, 0.0, 1.0);
    }
    for (int i = 0; i < n; ++i) m[i][i] = uniform(rng, 0.5, 1.0);
    CrossScore score = [&](int i, int j) { return m[i][j]; };
    std::vector<int> sel;
    try {
      sel = select_dissimilar(n, 3, score);
    } catch (const SelectionError&) {
      continue;
    }
    for (int i : sel) {
      for (int j : sel) {
        if (i != j) EXPECT_LT(m[i][j], 0.5 * m[j][j]);
      }
    }
    EXPECT_TRUE(std::is_sorted(sel.begin(), sel.end()));
  }
}

TEST(SelectDissimilar, NonPositiveOwnScoreRejected) {
  CrossScore score = [](int i, int j) { return i == j ? (i == 0 ? 0.0 : 1.0) : 0.0; };
  EXPECT_EQ(select_dissimilar(3, 2, score), (std::vector<int>{1, 2}));
}

TEST(Plan, CountingRule) {
  using K = ArchitectureKind;
  EXPECT_EQ(plan_runs(3, {K::scratch, K::fine_tune, K::a2t}).size(), 7u);
  EXPECT_EQ(plan_runs(3, {K::scratch, K::fine_tune, K::a2t, K::a2t_savt}).size(), 9u);
  EXPECT_EQ(plan_runs(3, {K::a2t}).size(), 5u);
  auto plan = plan_runs(3, {K::scratch, K::a2t});
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].kind == K::a2t) EXPECT_GE(plan[i].task, 2);
  }
}

TEST(Seeds, DistinctPerRun) {
  std::set<std::uint64_t> seen;
  for (int t = 1; t <= 10; ++t) {
    for (auto k : {ArchitectureKind::scratch, ArchitectureKind::fine_tune, ArchitectureKind::a2t,
                   ArchitectureKind::a2t_savt}) {
      EXPECT_EQ(run_seed(5, t, k), run_seed(5, t, k));
      seen.insert(run_seed(5, t, k));
    }
  }
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_NE(run_seed(5, 1, ArchitectureKind::scratch), run_seed(6, 1, ArchitectureKind::scratch));
}

TEST(Archive, ContiguousIndices) {
  SolutionArchive a;
  auto net = std::make_shared<const nn::Mlp>(nn::Mlp({4, 9}));
  EXPECT_THROW(a.add({2, net, {}, io::content_hash(*net)}), LayoutError);
  a.add({1, net, {}, io::content_hash(*net)});
  auto other = std::make_shared<const nn::Mlp>(nn::Mlp({6, 5}));
  EXPECT_THROW(a.add({2, other, {}, io::content_hash(*other)}), LayoutError);
  EXPECT_EQ(a.sources(1).size(), 1u);
  EXPECT_EQ(a.find_by_hash(io::content_hash(*net)), net);
}

TEST(TaskJson, RoundTrip) {
  auto cfg = env::GridworldConfig::from_ascii(kMap);
  auto seq = build_gw_learning_sequence(cfg, random_checkpoints(2, 4), 2);
  auto back = task_from_json(nlohmann::json::parse(to_json(seq[1]).dump()));
  EXPECT_EQ(task_hash(back), task_hash(seq[1]));
  EXPECT_NE(task_hash(seq[0]), task_hash(seq[1]));
  EXPECT_TRUE(std::get<nn::Mlp>(back.system) == std::get<nn::Mlp>(seq[1].system));
  auto ad = build_ad_learning_sequence();
  EXPECT_EQ(task_hash(task_from_json(to_json(ad[3]))), task_hash(ad[3]));
  Rng rng(1);
  LayoutOptions o;
  o.width = o.height = 4;
  auto comp = build_gw_comparable_sequence(2, rng, o);
  EXPECT_EQ(task_hash(task_from_json(to_json(comp[1]))), task_hash(comp[1]));
}

TEST(RunSequence, LayoutSourcesAndResume) {
  using K = ArchitectureKind;
  auto cfg = env::GridworldConfig::from_ascii(kMap);
  auto tasks = build_gw_learning_sequence(cfg, random_checkpoints(3, 9), 3);
  auto root = fresh_dir("seq");
  auto opt = small_options(root, {K::scratch, K::fine_tune, K::a2t, K::a2t_savt});
  auto rec = run_sequence(tasks, opt);
  ASSERT_EQ(rec.runs.size(), 9u);
  for (const auto& r : rec.runs) {
    EXPECT_EQ(r.status, RunStatus::completed) << r.message;
    for (const char* f : {"curve.csv", "checkpoint.json", "config.json", "log.txt"}) {
      EXPECT_TRUE(fs::exists(r.directory / f)) << r.directory / f;
    }
  }
  EXPECT_EQ(rec.total_steps_trained(), 9 * 400);

  auto load_scratch = [&](int task) {
    auto doc = io::read_json_file(root / ("task" + std::to_string(task)) / "scratch" / "checkpoint.json");
    return io::mlp_from_json(doc.at("network"));
  };
  const auto s1 = load_scratch(1);
  const auto s2 = load_scratch(2);
  auto a2t = io::read_json_file(root / "task3" / "a2t" / "checkpoint.json");
  ASSERT_EQ(a2t.at("sources").size(), 2u);
  EXPECT_EQ(a2t.at("sources")[0].at("content_hash"), io::content_hash(s1));
  EXPECT_EQ(a2t.at("sources")[1].at("content_hash"), io::content_hash(s2));
  auto ft = io::mlp_from_json(io::read_json_file(root / "task3" / "fine_tune" / "checkpoint.json").at("network"));
  EXPECT_TRUE(ft.weight(0) == s2.weight(0));
  EXPECT_TRUE(ft.weight(2) == s2.weight(2));

  auto again = run_sequence(tasks, opt);
  EXPECT_EQ(again.total_steps_trained(), 0);
  for (const auto& r : again.runs) EXPECT_EQ(r.status, RunStatus::resumed);
}

TEST(RunSequence, ParallelMatchesSerial) {
  using K = ArchitectureKind;
  auto cfg = env::GridworldConfig::from_ascii(kMap);
  auto tasks = build_gw_learning_sequence(cfg, random_checkpoints(3, 2), 3);
  auto a = fresh_dir("serial");
  auto b = fresh_dir("parallel");
  auto oa = small_options(a, {K::scratch, K::fine_tune, K::a2t});
  auto ob = small_options(b, {K::scratch, K::fine_tune, K::a2t});
  ob.jobs = 3;
  run_sequence(tasks, oa);
  run_sequence(tasks, ob);
  for (const auto& rel : {"task1/scratch", "task2/fine_tune", "task3/a2t", "task3/scratch"}) {
    EXPECT_EQ(slurp(a / rel / "curve.csv"), slurp(b / rel / "curve.csv")) << rel;
    EXPECT_EQ(slurp(a / rel / "checkpoint.json"), slurp(b / rel / "checkpoint.json")) << rel;
  }
}

TEST(RunSequence, FailedScratchFailsDependents) {
  using K = ArchitectureKind;
  auto cfg = env::GridworldConfig::from_ascii(kMap);
  auto tasks = build_gw_learning_sequence(cfg, random_checkpoints(2, 2), 2);
  tasks[0].system = std::monostate{};
  auto root = fresh_dir("failing");
  auto rec = run_sequence(tasks, small_options(root, {K::scratch, K::a2t}));
  ASSERT_EQ(rec.runs.size(), 3u);
  EXPECT_EQ(rec.find(1, "scratch")->status, RunStatus::failed);
  EXPECT_EQ(rec.find(2, "scratch")->status, RunStatus::completed);
  EXPECT_EQ(rec.find(2, "a2t")->status, RunStatus::failed);
}
