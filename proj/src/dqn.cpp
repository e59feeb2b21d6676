#include "svt/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "svt/errors.hpp"

namespace svt::dqn {

Vec QArchitecture::q_values(const Vec& state) const { return q_values(Mat(state)).col(0); }

GradientBuffer QArchitecture::parameter_gradients(const Mat& x, const Mat& output_grad) {
  auto grads = GradientBuffer::zeros_like(trainable_parameters());
  forward_train(x);
  backward(output_grad, grads);
  return grads;
}

// ---------------------------------------------------------------------------
// Configuration

void DqnConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidConfig("dqn." + what);
  };
  require(training_steps > 0, "training_steps must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(target_update_freq > 0, "target_update_freq must be positive");
  require(eval_every > 0, "eval_every must be positive");
  require(eval_episodes > 0, "eval_episodes must be positive");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(epsilon_end >= 0.0 && epsilon_start <= 1.0 && epsilon_end <= epsilon_start,
          "epsilon schedule must satisfy 0 <= end <= start <= 1");
  require(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0,
          "epsilon_decay_fraction must lie in (0, 1]");
  require(huber_delta > 0.0, "huber_delta must be positive");
  require(replay.capacity >= static_cast<std::size_t>(batch_size),
          "replay_capacity must hold at least one batch");
  require(replay.alpha >= 0.0, "priority_alpha must be non-negative");
  require(replay.priority_floor > 0.0, "priority_floor must be positive");
}

DqnConfig DqnConfig::desk() { return DqnConfig{}; }

DqnConfig DqnConfig::paper_gridworld() {
  DqnConfig cfg;
  cfg.training_steps = 3000000;
  cfg.learning_rate = 4e-5;
  cfg.target_update_freq = 2000;
  return cfg;
}

DqnConfig DqnConfig::paper_driving() {
  DqnConfig cfg;
  cfg.training_steps = 3000000;
  cfg.learning_rate = 5e-5;
  cfg.target_update_freq = 3000;
  return cfg;
}

nlohmann::json to_json(const DqnConfig& cfg) {
  return {{"training_steps", cfg.training_steps},
          {"batch_size", cfg.batch_size},
          {"optimizer", cfg.optimizer == nn::OptimizerKind::adam ? "adam" : "sgd"},
          {"learning_rate", cfg.learning_rate},
          {"target_update_freq", cfg.target_update_freq},
          {"eval_every", cfg.eval_every},
          {"eval_episodes", cfg.eval_episodes},
          {"gamma", cfg.gamma},
          {"epsilon_start", cfg.epsilon_start},
          {"epsilon_end", cfg.epsilon_end},
          {"epsilon_decay_fraction", cfg.epsilon_decay_fraction},
          {"huber_delta", cfg.huber_delta},
          {"replay_capacity", cfg.replay.capacity},
          {"priority_alpha", cfg.replay.alpha},
          {"beta_start", cfg.replay.beta_start},
          {"beta_end", cfg.replay.beta_end},
          {"priority_floor", cfg.replay.priority_floor},
          {"importance_sampling", cfg.replay.importance_sampling},
          {"seed", cfg.seed}};
}

DqnConfig dqn_config_from_json(const nlohmann::json& j, DqnConfig cfg) {
  if (!j.is_object()) throw InvalidConfig("dqn: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "training_steps") value.get_to(cfg.training_steps);
      else if (key == "batch_size") value.get_to(cfg.batch_size);
      else if (key == "optimizer") {
        const auto name = value.get<std::string>();
        if (name == "adam") cfg.optimizer = nn::OptimizerKind::adam;
        else if (name == "sgd") cfg.optimizer = nn::OptimizerKind::sgd;
        else throw InvalidConfig("dqn.optimizer: expected \"adam\" or \"sgd\", got \"" + name + "\"");
      }
      else if (key == "learning_rate") value.get_to(cfg.learning_rate);
      else if (key == "target_update_freq") value.get_to(cfg.target_update_freq);
      else if (key == "eval_every") value.get_to(cfg.eval_every);
      else if (key == "eval_episodes") value.get_to(cfg.eval_episodes);
      else if (key == "gamma") value.get_to(cfg.gamma);
      else if (key == "epsilon_start") value.get_to(cfg.epsilon_start);
      else if (key == "epsilon_end") value.get_to(cfg.epsilon_end);
      else if (key == "epsilon_decay_fraction") value.get_to(cfg.epsilon_decay_fraction);
      else if (key == "huber_delta") value.get_to(cfg.huber_delta);
      else if (key == "replay_capacity") value.get_to(cfg.replay.capacity);
      else if (key == "priority_alpha") value.get_to(cfg.replay.alpha);
      else if (key == "beta_start") value.get_to(cfg.replay.beta_start);
      else if (key == "beta_end") value.get_to(cfg.replay.beta_end);
      else if (key == "priority_floor") value.get_to(cfg.replay.priority_floor);
      else if (key == "importance_sampling") value.get_to(cfg.replay.importance_sampling);
      else if (key == "seed") value.get_to(cfg.seed);
      else throw InvalidConfig("dqn: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConfig("dqn." + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Learning curves

std::vector<long> LearningCurve::steps() const {
  std::vector<long> out;
  for (const auto& r : records) out.push_back(r.train_step);
  return out;
}

std::vector<double> LearningCurve::means() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.mean_return);
  return out;
}

void write_curve_csv(std::ostream& out, const LearningCurve& curve,
                     const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "train_step,mean_return,std_return,episodes\n";
  char buf[96];
  for (const auto& r : curve.records) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%d\n", r.train_step, r.mean_return,
                  r.std_return, r.episodes);
    out << buf;
  }
}

LearningCurve read_curve_csv(std::istream& in) {
  LearningCurve curve;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("train_step,mean_return,std_return,episodes", 0) != 0) {
        throw IoError("learning curve: unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    EvalRecord r;
    char c1, c2, c3;
    std::istringstream row(line);
    if (!(row >> r.train_step >> c1 >> r.mean_return >> c2 >> r.std_return >> c3 >> r.episodes) ||
        c1 != ',' || c2 != ',' || c3 != ',') {
      throw IoError("learning curve: malformed row '" + line + "'");
    }
    curve.records.push_back(r);
  }
  if (!header) throw IoError("learning curve: missing header");
  return curve;
}

// ---------------------------------------------------------------------------
// Core rules

double epsilon_at(long step, const DqnConfig& cfg) {
  const double horizon = cfg.epsilon_decay_fraction * static_cast<double>(cfg.training_steps);
  const double frac = horizon > 0.0 ? std::min(1.0, static_cast<double>(step) / horizon) : 1.0;
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

int epsilon_greedy(const Vec& q, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && uniform01(rng) < epsilon) {
    return uniform_index(rng, static_cast<int>(q.size()));
  }
  return nn::argmax(q);
}

double td_target(double reward, const Vec& next_state, bool terminal, const QArchitecture& online,
                 const QArchitecture& target, double gamma) {
  if (terminal) return reward;
  const int best = nn::argmax(online.q_values(next_state));
  return reward + gamma * target.q_values(next_state)[best];
}

EvalStats evaluate(const env::EnvFactory& factory, const QArchitecture& arch, int episodes,
                   std::uint64_t seed) {
  auto env = factory();
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    Vec s = env->reset(rng);
    double total = 0.0;
    for (;;) {
      const auto r = env->step(nn::argmax(arch.q_values(s)), rng);
      total += r.reward;
      if (r.done) break;
      s = r.next_state;
    }
    returns.push_back(total);
  }
  EvalStats stats;
  stats.episodes = episodes;
  if (episodes == 0) return stats;
  double sum = 0.0;
  for (double r : returns) sum += r;
  stats.mean = sum / episodes;
  double sq = 0.0;
  for (double r : returns) sq += (r - stats.mean) * (r - stats.mean);
  stats.std = std::sqrt(sq / episodes);
  return stats;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Learner {
  const DqnConfig& cfg;
  QArchitecture& online;
  std::unique_ptr<QArchitecture> target;
  std::vector<Mat*> params;
  GradientBuffer grads;
  nn::OptimizerState opt;

  Learner(const DqnConfig& c, QArchitecture& arch)
      : cfg(c), online(arch), target(arch.clone()), params(arch.trainable_parameters()) {
    grads = GradientBuffer::zeros_like(params);
    opt.kind = cfg.optimizer;
    opt.learning_rate = cfg.learning_rate;
  }

  void update(replay::ReplayBuffer& buffer, Rng& rng, long step) {
    const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), rng);
    const int n = online.state_dim();
    const int b = cfg.batch_size;
    Mat states(n, b);
    Mat next_states(n, b);
    for (int i = 0; i < b; ++i) {
      states.col(i) = batch.transitions[i]->state;
      next_states.col(i) = batch.transitions[i]->next_state;
    }
    const Mat next_online = online.q_values(next_states);
    const Mat next_target = target->q_values(next_states);
    const Mat q = online.forward_train(states);

    Mat out_grad = Mat::Zero(q.rows(), b);
    std::vector<double> td(b);
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const auto& t = *batch.transitions[i];
      double y = t.reward;
      if (!t.terminal) {
        const int best = nn::argmax(next_online.col(i));
        y += cfg.gamma * next_target(best, i);
      }
      const double err = q(t.disturbance, i) - y;
      const auto h = nn::huber_loss(err, cfg.huber_delta);
      loss += batch.weights[i] * h.value;
      out_grad(t.disturbance, i) = batch.weights[i] * h.derivative / b;
      td[i] = err;
    }
    if (!std::isfinite(loss)) throw TrainingDiverged(step);
    grads.zero();
    online.backward(out_grad, grads);
    nn::optimizer_step(params, grads, opt);
    buffer.update_priorities(batch.indices, td);
  }
};

}  // namespace

TrainResult train(const env::EnvFactory& factory, QArchitecture& arch, const DqnConfig& cfg,
                  const StepCallback& on_step) {
  cfg.validate();
  auto env = factory();
  if (env->state_dim() != arch.state_dim() || env->num_disturbances() != arch.num_actions()) {
    throw ShapeError("architecture is " + std::to_string(arch.state_dim()) + "->" +
                     std::to_string(arch.num_actions()) + " but the environment is " +
                     std::to_string(env->state_dim()) + "->" +
                     std::to_string(env->num_disturbances()));
  }
  Rng rng(derive_seed(cfg.seed, seed_tag("train")));
  replay::ReplayBuffer buffer(cfg.replay);
  Learner learner(cfg, arch);
  TrainResult result;

  Vec state = env->reset(rng);
  FailureTrace episode;
  const auto total = static_cast<double>(cfg.training_steps);
  for (long step = 1; step <= cfg.training_steps; ++step) {
    const int action = epsilon_greedy(arch.q_values(state), epsilon_at(step - 1, cfg), rng);
    auto sr = env->step(action, rng);
    episode.disturbances.push_back(action);
    episode.rewards.push_back(sr.reward);
    buffer.push({state, action, sr.reward, sr.next_state, sr.done && !sr.truncated});
    if (sr.done) {
      ++result.episodes;
      if (sr.is_failure) {
        ++result.failures_discovered;
        if (!result.first_failure) {
          episode.train_step = step;
          result.first_failure = std::move(episode);
        }
      }
      episode = FailureTrace{};
      state = env->reset(rng);
    } else {
      state = std::move(sr.next_state);
    }

    buffer.set_beta(cfg.replay.beta_start +
                    (cfg.replay.beta_end - cfg.replay.beta_start) * static_cast<double>(step) / total);
    if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) learner.update(buffer, rng, step);
    if (step % cfg.target_update_freq == 0) learner.target = arch.clone();
    if (step % cfg.eval_every == 0) {
      const auto stats = evaluate(factory, arch, cfg.eval_episodes,
                                  derive_seed(cfg.seed, seed_tag("eval"),
                                              static_cast<std::uint64_t>(step)));
      result.curve.records.push_back({step, stats.mean, stats.std, stats.episodes});
    }
    if (on_step) on_step(step, arch, *learner.target);
  }
  return result;
}

}  // namespace svt::dqn
