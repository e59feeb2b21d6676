#include "svt/sut.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "svt/dqn.hpp"
#include "svt/errors.hpp"
#include "svt/transfer.hpp"

namespace svt::sut {

TabularPolicy::TabularPolicy(int width, int height, int orange_slots, std::vector<int> actions,
                             std::vector<double> values)
    : width_(width),
      height_(height),
      orange_slots_(orange_slots),
      actions_(std::move(actions)),
      values_(std::move(values)) {
  const auto n = static_cast<std::size_t>(width) * height * orange_slots;
  if (width < 1 || height < 1 || orange_slots < 1 || actions_.size() != n || values_.size() != n) {
    throw ShapeError("tabular policy tables do not match the board size");
  }
  for (int a : actions_) {
    if (a < 0 || a >= env::kNumMoves) throw InvalidConfig("tabular policy action out of range");
  }
}

int TabularPolicy::joint_index(Cell blue, Cell orange) const {
  const int b = blue.y * width_ + blue.x;
  return orange_slots_ == 1 ? b : b * orange_slots_ + orange.y * width_ + orange.x;
}

int TabularPolicy::act(const GridworldState& state, const GridworldConfig& cfg) const {
  if (cfg.width != width_ || cfg.height != height_) {
    throw ShapeError("tabular policy was solved for a different board size");
  }
  return actions_[joint_index(state.blue, state.orange)];
}

nlohmann::json to_json(const TabularPolicy& policy) {
  return {{"kind", "tabular"},
          {"width", policy.width()},
          {"height", policy.height()},
          {"orange_slots", policy.orange_slots()},
          {"actions", policy.actions()},
          {"values", io::encode_doubles(policy.values())}};
}

namespace {

struct Solver {
  const GridworldConfig& cfg;
  const env::SystemRewardSpec& reward;
  int cells;
  int slots;
  std::vector<std::array<int, env::kNumMoves>> orange_dest;
  // blue_moves[b * 9 + a] = list of (destination index, probability)
  std::vector<std::vector<std::pair<int, double>>> blue_moves;
  std::vector<char> blue_live;
  std::vector<char> orange_ok;

  Solver(const GridworldConfig& c, const env::SystemRewardSpec& r)
      : cfg(c), reward(r), cells(c.num_cells()), slots(r.adversary_present ? c.num_cells() : 1) {
    orange_dest.resize(cells);
    blue_moves.resize(static_cast<std::size_t>(cells) * env::kNumMoves);
    blue_live.assign(cells, 0);
    orange_ok.assign(cells, 0);
    for (int i = 0; i < cells; ++i) {
      const Cell c = cfg.cell(i);
      if (!cfg.is_free(c)) continue;
      orange_ok[i] = 1;
      blue_live[i] = cfg.is_goal(c) ? 0 : 1;
      for (int m = 0; m < env::kNumMoves; ++m) orange_dest[i][m] = cfg.index(cfg.resolve(c, m));
      if (!blue_live[i]) continue;
      for (int a = 0; a < env::kNumMoves; ++a) {
        for (const auto& [dest, p] : env::blue_transition(cfg, c, a)) {
          blue_moves[static_cast<std::size_t>(i) * env::kNumMoves + a].emplace_back(cfg.index(dest),
                                                                                    p);
        }
      }
    }
  }

  bool terminal(int b, int o) const {
    if (!blue_live[b]) return true;
    if (slots == 1) return false;
    return !orange_ok[o] || b == o;
  }

  std::vector<double> backup(const std::vector<double>& v, double gamma,
                             std::vector<int>* greedy) const {
    const std::size_t n = static_cast<std::size_t>(cells) * slots;
    if (v.size() != n) throw ShapeError("value table has the wrong size");
    // u[b' * slots + o]: expectation over the adversary's move, given blue lands on b'.
    std::vector<double> u(n, 0.0);
    for (int bn = 0; bn < cells; ++bn) {
      if (!orange_ok[bn]) continue;
      const Cell bc = cfg.cell(bn);
      const bool goal = cfg.is_goal(bc);
      const double goal_r = goal ? cfg.goal_rewards.at(bc) : 0.0;
      if (slots == 1) {
        u[bn] = goal ? goal_r : gamma * v[bn];
        continue;
      }
      for (int o = 0; o < cells; ++o) {
        if (!orange_ok[o]) continue;
        double sum = 0.0;
        for (int x = 0; x < env::kNumMoves; ++x) {
          const int on = orange_dest[o][x];
          if (on == bn) {
            sum += reward.collision_reward;
          } else if (goal) {
            sum += goal_r;
          } else {
            sum += gamma * v[static_cast<std::size_t>(bn) * slots + on];
          }
        }
        u[static_cast<std::size_t>(bn) * slots + o] = sum / env::kNumMoves;
      }
    }
    std::vector<double> out(n, 0.0);
    if (greedy) greedy->assign(n, env::kStay);
    for (int b = 0; b < cells; ++b) {
      for (int o = 0; o < slots; ++o) {
        if (terminal(b, o)) continue;
        double best = 0.0;
        int best_a = 0;
        for (int a = 0; a < env::kNumMoves; ++a) {
          double q = 0.0;
          for (const auto& [bn, p] : blue_moves[static_cast<std::size_t>(b) * env::kNumMoves + a]) {
            q += p * u[static_cast<std::size_t>(bn) * slots + o];
          }
          if (a == 0 || q > best) {
            best = q;
            best_a = a;
          }
        }
        const std::size_t j = static_cast<std::size_t>(b) * slots + o;
        out[j] = best;
        if (greedy) (*greedy)[j] = best_a;
      }
    }
    return out;
  }
};

}  // namespace

TabularPolicy tabular_policy_from_json(const nlohmann::json& j) {
  try {
    return TabularPolicy(j.at("width").get<int>(), j.at("height").get<int>(),
                         j.at("orange_slots").get<int>(), j.at("actions").get<std::vector<int>>(),
                         io::decode_doubles(j.at("values").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed tabular policy: ") + e.what());
  }
}

std::vector<double> bellman_backup(const GridworldConfig& cfg, const env::SystemRewardSpec& reward,
                                   const std::vector<double>& values, double gamma,
                                   std::vector<int>* greedy) {
  return Solver(cfg, reward).backup(values, gamma, greedy);
}

TabularPolicy value_iteration(const GridworldConfig& cfg, const env::SystemRewardSpec& reward,
                              const ValueIterationOptions& options) {
  cfg.validate();
  if (!(options.gamma >= 0.0 && options.gamma < 1.0)) {
    throw InvalidConfig("value iteration needs 0 <= gamma < 1");
  }
  const Solver solver(cfg, reward);
  std::vector<double> v(static_cast<std::size_t>(solver.cells) * solver.slots, 0.0);
  for (long it = 0;; ++it) {
    if (it >= options.max_iterations) {
      throw ConvergenceError("value iteration did not converge within " +
                             std::to_string(options.max_iterations) + " iterations");
    }
    std::vector<double> next = solver.backup(v, options.gamma, nullptr);
    double delta = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) delta = std::max(delta, std::abs(next[i] - v[i]));
    v = std::move(next);
    if (delta < options.tolerance) break;
  }
  std::vector<int> greedy;
  solver.backup(v, options.gamma, &greedy);
  return TabularPolicy(cfg.width, cfg.height, solver.slots, std::move(greedy), std::move(v));
}

MlpGridPolicy::MlpGridPolicy(nn::Mlp net) : net_(std::move(net)) {
  if (net_.input_dim() != 4 || net_.output_dim() != env::kNumMoves) {
    throw ShapeError("gridworld system network must map 4 inputs to 9 actions");
  }
}

int MlpGridPolicy::act(const GridworldState& state, const GridworldConfig& cfg) const {
  return nn::argmax(net_.forward(env::gw_encode(state, cfg)));
}

// ---------------------------------------------------------------------------

double idm_free_road(const env::IdmParams& p, double speed) {
  return p.max_accel * (1.0 - std::pow(speed / p.desired_speed, p.exponent));
}

double idm_with_leader(const env::IdmParams& p, double speed, double gap, double dv) {
  const double s_star = p.min_gap + speed * p.time_headway +
                        speed * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  const double ratio = s_star / gap;
  return p.max_accel * (1.0 - std::pow(speed / p.desired_speed, p.exponent) - ratio * ratio);
}

IdmController::IdmController(const DrivingConfig& cfg)
    : IdmController(cfg, cfg.blind_spot_direction_deg, cfg.blind_spot_width_deg) {}

IdmController::IdmController(const DrivingConfig& cfg, double direction, double width)
    : cfg_(cfg), direction_(direction), width_(width) {
  if (!(width >= 0.0)) throw InvalidConfig("blind spot width must be >= 0");
  const auto& p = cfg.idm;
  if (!(p.desired_speed > 0 && p.max_accel > 0 && p.comfort_decel > 0 && p.min_gap > 0 &&
        p.time_headway > 0 && p.exponent > 0)) {
    throw InvalidConfig("IDM parameters must be positive");
  }
}

double IdmController::bearing_deg(const DrivingState& s) const {
  return std::atan2(s.ped_y, s.ped_x - s.veh_x) * 180.0 / std::numbers::pi;
}

bool IdmController::is_visible(const DrivingState& s) const {
  double d = std::fmod(bearing_deg(s) - direction_, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d <= -180.0) d += 360.0;
  return !(std::abs(d) < 0.5 * width_);
}

double IdmController::acceleration(const DrivingState& s) const {
  const auto& p = cfg_.idm;
  const double floor = -2.0 * p.comfort_decel;
  const bool leads = s.ped_x > s.veh_x && std::abs(s.ped_y) <= cfg_.corridor_half_width;
  double a = 0.0;
  if (leads && is_visible(s)) {
    const double gap = s.ped_x - s.veh_x - 0.5 * cfg_.vehicle_length - 0.5 * cfg_.ped_size;
    a = gap > 0.0 ? idm_with_leader(p, s.veh_speed, gap, s.veh_speed) : floor;
  } else {
    a = idm_free_road(p, s.veh_speed);
  }
  return std::clamp(a, floor, p.max_accel);
}

// ---------------------------------------------------------------------------

std::vector<long> checkpoint_steps(long training_steps, int n_checkpoints) {
  if (n_checkpoints < 1 || training_steps < n_checkpoints) {
    throw InvalidConfig("need 1 <= n_checkpoints <= training_steps");
  }
  std::vector<long> out;
  for (int k = 1; k <= n_checkpoints; ++k) out.push_back(training_steps * k / n_checkpoints);
  return out;
}

std::vector<nn::Mlp> train_system_checkpoints(const GridworldConfig& cfg,
                                              const dqn::DqnConfig& dqn_cfg, int n_checkpoints,
                                              const env::SystemRewardSpec& reward) {
  const auto steps = checkpoint_steps(dqn_cfg.training_steps, n_checkpoints);
  Rng init(derive_seed(dqn_cfg.seed, seed_tag("system-init")));
  transfer::MlpQ arch(nn::Mlp::xavier(transfer::base_layer_sizes(4, env::kNumMoves), init));
  env::EnvFactory factory = [cfg, reward] {
    return std::make_unique<env::GridworldSystemEnv>(cfg, reward);
  };
  std::vector<nn::Mlp> out;
  std::size_t next = 0;
  dqn::train(factory, arch, dqn_cfg,
             [&](long step, const dqn::QArchitecture& online, const dqn::QArchitecture&) {
               if (next < steps.size() && step == steps[next]) {
                 out.push_back(dynamic_cast<const transfer::MlpQ&>(online).network());
                 ++next;
               }
             });
  return out;
}

}  // namespace svt::sut
