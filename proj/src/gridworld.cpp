#include "svt/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "svt/errors.hpp"

namespace svt::env {

namespace {

constexpr std::array<Cell, kNumMoves> kOffsets = {{
    {0, 1}, {0, -1}, {-1, 0}, {1, 0}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}, {0, 0},
}};

void check_move(int move, const char* what) {
  if (move < 0 || move >= kNumMoves) {
    throw InvalidDisturbance(std::string(what) + " index " + std::to_string(move) +
                             " outside 0..8");
  }
}

}  // namespace

Cell move_offset(int move) {
  check_move(move, "move");
  return kOffsets[move];
}

void GridworldConfig::validate() const {
  if (width < 1 || height < 1) throw InvalidConfig("gridworld dimensions must be positive");
  if (slip_prob < 0.0 || slip_prob > 1.0) throw InvalidConfig("slip_prob must lie in [0, 1]");
  if (max_steps < 1) throw InvalidConfig("max_steps must be positive");
  for (const Cell& w : walls) {
    if (!in_bounds(w)) throw InvalidConfig("wall outside the board");
  }
  for (const auto& [c, r] : goal_rewards) {
    if (!in_bounds(c)) throw InvalidConfig("goal outside the board");
    if (is_wall(c)) throw InvalidConfig("goal placed on a wall");
    if (!(r > 0.0)) throw InvalidConfig("goal rewards must be positive");
  }
}

Cell GridworldConfig::resolve(Cell from, int move) const {
  const Cell d = move_offset(move);
  const Cell to{from.x + d.x, from.y + d.y};
  return is_free(to) ? to : from;
}

std::vector<Cell> GridworldConfig::start_cells() const {
  std::vector<Cell> out;
  for (int i = 0; i < num_cells(); ++i) {
    const Cell c = cell(i);
    if (!is_wall(c) && !is_goal(c)) out.push_back(c);
  }
  return out;
}

bool GridworldConfig::connected() const {
  std::vector<char> seen(num_cells(), 0);
  int free_count = 0;
  int start = -1;
  for (int i = 0; i < num_cells(); ++i) {
    if (!is_wall(cell(i))) {
      ++free_count;
      if (start < 0) start = i;
    }
  }
  if (free_count == 0) return false;
  std::deque<int> queue{start};
  seen[start] = 1;
  int reached = 1;
  while (!queue.empty()) {
    const Cell c = cell(queue.front());
    queue.pop_front();
    for (int m = 0; m < kNumMoves; ++m) {
      const Cell n = resolve(c, m);
      if (!seen[index(n)]) {
        seen[index(n)] = 1;
        ++reached;
        queue.push_back(index(n));
      }
    }
  }
  return reached == free_count;
}

GridworldConfig GridworldConfig::reflected() const {
  GridworldConfig out = *this;
  out.width = height;
  out.height = width;
  out.walls.clear();
  out.goal_rewards.clear();
  for (const Cell& w : walls) out.walls.insert({w.y, w.x});
  for (const auto& [c, r] : goal_rewards) out.goal_rewards[{c.y, c.x}] = r;
  return out;
}

GridworldConfig GridworldConfig::from_ascii(std::string_view map) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(map)};
  for (std::string line; std::getline(in, line);) {
    std::string row;
    for (char c : line) {
      if (c != ' ' && c != '\t' && c != '\r') row += c;
    }
    if (!row.empty()) rows.push_back(row);
  }
  if (rows.empty()) throw InvalidConfig("empty gridworld map");
  GridworldConfig cfg;
  cfg.height = static_cast<int>(rows.size());
  cfg.width = static_cast<int>(rows.front().size());
  for (int r = 0; r < cfg.height; ++r) {
    if (static_cast<int>(rows[r].size()) != cfg.width) {
      throw InvalidConfig("gridworld map rows have different lengths");
    }
    const int y = cfg.height - 1 - r;
    for (int x = 0; x < cfg.width; ++x) {
      const char c = rows[r][x];
      if (c == '#') {
        cfg.walls.insert({x, y});
      } else if (c >= '1' && c <= '9') {
        cfg.goal_rewards[{x, y}] = c - '0';
      } else if (c != '.') {
        throw InvalidConfig(std::string("unexpected map character '") + c + "'");
      }
    }
  }
  cfg.validate();
  return cfg;
}

std::string GridworldConfig::to_ascii() const {
  std::string out;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      const Cell c{x, y};
      if (is_wall(c)) {
        out += '#';
      } else if (auto it = goal_rewards.find(c); it != goal_rewards.end()) {
        const int r = static_cast<int>(it->second);
        if (r < 1 || r > 9 || r != it->second) {
          throw InvalidConfig("goal reward " + std::to_string(it->second) +
                              " has no single-digit map encoding");
        }
        out += static_cast<char>('0' + r);
      } else {
        out += '.';
      }
    }
    out += '\n';
  }
  return out;
}

nlohmann::json to_json(const GridworldConfig& cfg) {
  nlohmann::json walls = nlohmann::json::array();
  for (const Cell& w : cfg.walls) walls.push_back({w.x, w.y});
  nlohmann::json goals = nlohmann::json::array();
  for (const auto& [c, r] : cfg.goal_rewards) goals.push_back({{"cell", {c.x, c.y}}, {"reward", r}});
  return {{"width", cfg.width},         {"height", cfg.height},       {"walls", walls},
          {"goals", goals},             {"slip_prob", cfg.slip_prob}, {"max_steps", cfg.max_steps},
          {"seed", cfg.seed}};
}

GridworldConfig gridworld_from_json(const nlohmann::json& j) {
  GridworldConfig cfg;
  if (j.contains("map")) {
    cfg = GridworldConfig::from_ascii(j.at("map").get<std::string>());
  } else {
    cfg.width = j.value("width", cfg.width);
    cfg.height = j.value("height", cfg.height);
    for (const auto& w : j.value("walls", nlohmann::json::array())) {
      cfg.walls.insert({w.at(0).get<int>(), w.at(1).get<int>()});
    }
    for (const auto& g : j.value("goals", nlohmann::json::array())) {
      const auto& c = g.at("cell");
      cfg.goal_rewards[{c.at(0).get<int>(), c.at(1).get<int>()}] = g.at("reward").get<double>();
    }
  }
  cfg.slip_prob = j.value("slip_prob", cfg.slip_prob);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

std::vector<std::pair<Cell, double>> blue_transition(const GridworldConfig& cfg, Cell blue,
                                                     int intent) {
  const Cell target = cfg.resolve(blue, intent);
  std::vector<Cell> others;
  for (int m = 0; m < kNumMoves; ++m) {
    const Cell c = cfg.resolve(blue, m);
    if (c != target && std::find(others.begin(), others.end(), c) == others.end()) {
      others.push_back(c);
    }
  }
  if (others.empty() || cfg.slip_prob == 0.0) return {{target, 1.0}};
  std::vector<std::pair<Cell, double>> out{{target, 1.0 - cfg.slip_prob}};
  const double each = cfg.slip_prob / static_cast<double>(others.size());
  for (const Cell& c : others) out.emplace_back(c, each);
  return out;
}

namespace {

Cell sample_blue(const GridworldConfig& cfg, Cell blue, int intent, Rng& rng) {
  const Cell target = cfg.resolve(blue, intent);
  if (cfg.slip_prob == 0.0 || uniform01(rng) >= cfg.slip_prob) return target;
  std::vector<Cell> others;
  for (int m = 0; m < kNumMoves; ++m) {
    const Cell c = cfg.resolve(blue, m);
    if (c != target && std::find(others.begin(), others.end(), c) == others.end()) {
      others.push_back(c);
    }
  }
  if (others.empty()) return target;
  return others[uniform_index(rng, static_cast<int>(others.size()))];
}

}  // namespace

GridStep gw_step(const GridworldConfig& cfg, const GridworldState& state, int disturbance,
                 int system_action, Rng& rng) {
  check_move(disturbance, "disturbance");
  check_move(system_action, "system action");
  GridStep out;
  out.next = state;
  out.next.blue = sample_blue(cfg, state.blue, system_action, rng);
  out.next.orange = cfg.resolve(state.orange, disturbance);
  out.next.steps = state.steps + 1;
  if (out.next.blue == out.next.orange) {
    out.reward = 1.0;
    out.is_failure = true;
    out.done = true;
  } else if (cfg.is_goal(out.next.blue)) {
    out.reached_goal = true;
    out.done = true;
  } else if (out.next.steps >= cfg.max_steps) {
    out.done = true;
    out.truncated = true;
  }
  out.next.done = out.done;
  return out;
}

Vec gw_encode(const GridworldState& state, const GridworldConfig& cfg) {
  const double sx = cfg.width > 1 ? 1.0 / (cfg.width - 1) : 0.0;
  const double sy = cfg.height > 1 ? 1.0 / (cfg.height - 1) : 0.0;
  Vec v(4);
  v << state.blue.x * sx, state.blue.y * sy, state.orange.x * sx, state.orange.y * sy;
  return v;
}

GridworldState gw_reset(const GridworldConfig& cfg, Rng& rng) {
  const auto cells = cfg.start_cells();
  const int n = static_cast<int>(cells.size());
  if (n < 2) throw InvalidConfig("gridworld needs at least two free non-goal cells");
  GridworldState s;
  const int b = uniform_index(rng, n);
  int o = uniform_index(rng, n - 1);
  if (o >= b) ++o;
  s.blue = cells[b];
  s.orange = cells[o];
  return s;
}

// ---------------------------------------------------------------------------

GridworldAdversaryEnv::GridworldAdversaryEnv(GridworldConfig cfg,
                                             std::shared_ptr<const GridSystemPolicy> system)
    : cfg_(std::move(cfg)), system_(std::move(system)) {
  cfg_.validate();
  if (!system_) throw InvalidConfig("gridworld adversary environment needs a system policy");
}

Vec GridworldAdversaryEnv::reset(Rng& rng) {
  state_ = gw_reset(cfg_, rng);
  return gw_encode(state_, cfg_);
}

StepResult GridworldAdversaryEnv::step(int disturbance, Rng& rng) {
  const int action = system_->act(state_, cfg_);
  const GridStep s = gw_step(cfg_, state_, disturbance, action, rng);
  state_ = s.next;
  return {gw_encode(state_, cfg_), s.reward, s.done, s.is_failure, s.truncated};
}

GridworldSystemEnv::GridworldSystemEnv(GridworldConfig cfg, SystemRewardSpec spec)
    : cfg_(std::move(cfg)), spec_(spec) {
  cfg_.validate();
}

Vec GridworldSystemEnv::reset(Rng& rng) {
  state_ = gw_reset(cfg_, rng);
  return gw_encode(state_, cfg_);
}

StepResult GridworldSystemEnv::step(int action, Rng& rng) {
  const int disturbance = spec_.adversary_present ? uniform_index(rng, kNumMoves) : kStay;
  GridStep s = gw_step(cfg_, state_, disturbance, action, rng);
  StepResult out;
  if (!spec_.adversary_present && s.is_failure) {
    // Orange is inert: re-evaluate the outcome without the collision.
    s.is_failure = false;
    s.reward = 0.0;
    s.done = cfg_.is_goal(s.next.blue) || s.next.steps >= cfg_.max_steps;
    s.reached_goal = cfg_.is_goal(s.next.blue);
    s.truncated = !s.reached_goal && s.done;
  }
  state_ = s.next;
  state_.done = s.done;
  out.next_state = gw_encode(state_, cfg_);
  out.done = s.done;
  out.truncated = s.truncated;
  if (s.is_failure) {
    out.reward = spec_.collision_reward;
    out.is_failure = true;
  } else if (s.reached_goal) {
    out.reward = cfg_.goal_rewards.at(state_.blue);
  }
  return out;
}

}  // namespace svt::env
