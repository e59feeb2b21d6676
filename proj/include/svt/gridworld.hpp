#pragma once

// Gridworld with an adversary. The system (blue) agent picks moves from its
// own policy and slips with probability slip_prob; the adversary (orange)
// moves deterministically according to the disturbance. A failure is both
// agents on the same cell after a step.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svt/env.hpp"

namespace svt::env {

struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Shared move set for both agents. "up" is +y.
enum Move : int { kUp, kDown, kLeft, kRight, kUpRight, kUpLeft, kDownRight, kDownLeft, kStay };
inline constexpr int kNumMoves = 9;
Cell move_offset(int move);

struct GridworldConfig {
  int width = 10;
  int height = 10;
  std::set<Cell> walls;
  std::map<Cell, double> goal_rewards;
  double slip_prob = 0.3;
  int max_steps = 50;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool is_wall(Cell c) const { return walls.contains(c); }
  bool is_goal(Cell c) const { return goal_rewards.contains(c); }
  bool is_free(Cell c) const { return in_bounds(c) && !is_wall(c); }
  int num_cells() const { return width * height; }
  int index(Cell c) const { return c.y * width + c.x; }
  Cell cell(int index) const { return {index % width, index / width}; }

  /// Destination of a move; moves into walls or off the board stay put.
  Cell resolve(Cell from, int move) const;

  /// Cells an agent may start on: free and not a goal.
  std::vector<Cell> start_cells() const;

  /// True when every free cell is reachable from every other (8-connected).
  bool connected() const;

  /// Mirror image across the main diagonal, (x, y) -> (y, x).
  GridworldConfig reflected() const;

  /// '#' wall, '.' free, '1'..'9' goal with that reward. The first line is
  /// the top row (largest y).
  static GridworldConfig from_ascii(std::string_view map);
  std::string to_ascii() const;

  friend bool operator==(const GridworldConfig&, const GridworldConfig&) = default;
};

nlohmann::json to_json(const GridworldConfig& cfg);
/// Accepts {"map": ascii} or explicit width/height/walls/goals; optional
/// slip_prob, max_steps, seed.
GridworldConfig gridworld_from_json(const nlohmann::json& j);

struct GridworldState {
  Cell blue;
  Cell orange;
  bool done = false;
  int steps = 0;
};

/// Distribution of the blue agent's next cell: the intended destination with
/// probability 1 - slip_prob, the remaining mass spread uniformly over the
/// other feasible destinations (neighbours and staying put).
std::vector<std::pair<Cell, double>> blue_transition(const GridworldConfig& cfg, Cell blue,
                                                     int intent);

struct GridStep {
  GridworldState next;
  double reward = 0.0;
  bool done = false;
  bool is_failure = false;
  bool truncated = false;
  bool reached_goal = false;
};

/// One joint move. Reward 1 and failure on collision; reaching a goal ends
/// the episode with reward 0. Throws InvalidDisturbance for indices outside
/// 0..8.
GridStep gw_step(const GridworldConfig& cfg, const GridworldState& state, int disturbance,
                 int system_action, Rng& rng);

/// [bx, by, ox, oy] scaled to [0, 1].
Vec gw_encode(const GridworldState& state, const GridworldConfig& cfg);

/// Blue and orange on distinct start cells, uniformly. Throws InvalidConfig
/// when fewer than two start cells exist.
GridworldState gw_reset(const GridworldConfig& cfg, Rng& rng);

/// Policy of the system under test in the gridworld.
class GridSystemPolicy {
 public:
  virtual ~GridSystemPolicy() = default;
  virtual int act(const GridworldState& state, const GridworldConfig& cfg) const = 0;
};

class GridworldAdversaryEnv : public Environment {
 public:
  GridworldAdversaryEnv(GridworldConfig cfg, std::shared_ptr<const GridSystemPolicy> system);

  int state_dim() const override { return 4; }
  int num_disturbances() const override { return kNumMoves; }
  Vec reset(Rng& rng) override;
  StepResult step(int disturbance, Rng& rng) override;

  const GridworldState& state() const { return state_; }
  void set_state(const GridworldState& s) { state_ = s; }
  const GridworldConfig& config() const { return cfg_; }

 private:
  GridworldConfig cfg_;
  std::shared_ptr<const GridSystemPolicy> system_;
  GridworldState state_;
};

/// Reward model of the system's own MDP, used to build system policies.
struct SystemRewardSpec {
  double collision_reward = -1.0;
  /// When false the orange agent is ignored entirely (single-agent MDP).
  bool adversary_present = true;
};

/// The blue agent's MDP against a uniformly random adversary; actions are
/// blue move intents.
class GridworldSystemEnv : public Environment {
 public:
  GridworldSystemEnv(GridworldConfig cfg, SystemRewardSpec spec = {});

  int state_dim() const override { return 4; }
  int num_disturbances() const override { return kNumMoves; }
  Vec reset(Rng& rng) override;
  StepResult step(int action, Rng& rng) override;

 private:
  GridworldConfig cfg_;
  SystemRewardSpec spec_;
  GridworldState state_;
};

}  // namespace svt::env
