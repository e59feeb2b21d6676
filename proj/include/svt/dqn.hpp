#pragma once

// Double-DQN training with a target network, prioritized replay, the Huber
// loss and periodic greedy evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "svt/env.hpp"
#include "svt/nn.hpp"
#include "svt/replay.hpp"

namespace svt::dqn {

using nn::GradientBuffer;
using nn::Mat;
using nn::Vec;

/// A trainable Q-function over a fixed state and disturbance space. The four
/// transfer architectures all implement this.
class QArchitecture {
 public:
  virtual ~QArchitecture() = default;

  virtual std::string kind() const = 0;
  virtual int state_dim() const = 0;
  virtual int num_actions() const = 0;

  /// Q-values for a batch of states (one per column).
  virtual Mat q_values(const Mat& states) const = 0;
  Vec q_values(const Vec& state) const;

  /// Forward pass that keeps what backward() needs. Only the owning trainer
  /// calls this.
  virtual Mat forward_train(const Mat& states) = 0;
  /// Adds gradients of sum(output_grad .* Q) into grads, ordered as
  /// trainable_parameters(). Uses the most recent forward_train().
  virtual void backward(const Mat& output_grad, GradientBuffer& grads) = 0;

  virtual std::vector<Mat*> trainable_parameters() = 0;
  /// Every parameter the architecture owns, trainable or frozen-but-owned
  /// (shared source networks are not included).
  virtual std::vector<const Mat*> owned_parameters() const = 0;
  virtual std::unique_ptr<QArchitecture> clone() const = 0;

  // Differentiable interface for nn::gradient_check.
  Mat forward(const Mat& x) const { return q_values(x); }
  GradientBuffer parameter_gradients(const Mat& x, const Mat& output_grad);
};

struct DqnConfig {
  long training_steps = 200000;
  int batch_size = 64;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double learning_rate = 1e-3;
  long target_update_freq = 2000;
  long eval_every = 2000;
  int eval_episodes = 300;
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  /// Fraction of training over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.5;
  double huber_delta = 1.0;
  replay::ReplayConfig replay;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;

  static DqnConfig desk();
  static DqnConfig paper_gridworld();
  static DqnConfig paper_driving();
};

nlohmann::json to_json(const DqnConfig& cfg);
/// Applies the keys present in j on top of base; unknown keys are rejected.
DqnConfig dqn_config_from_json(const nlohmann::json& j, DqnConfig base);

struct EvalRecord {
  long train_step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  int episodes = 0;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct LearningCurve {
  std::vector<EvalRecord> records;

  std::vector<long> steps() const;
  std::vector<double> means() const;
  friend bool operator==(const LearningCurve&, const LearningCurve&) = default;
};

/// Delimited table: comment lines start with '#', then a header
/// "train_step,mean_return,std_return,episodes". Doubles are written with
/// 17 significant digits so reading back is exact.
void write_curve_csv(std::ostream& out, const LearningCurve& curve,
                     const std::vector<std::string>& comments = {});
LearningCurve read_curve_csv(std::istream& in);

struct EvalStats {
  double mean = 0.0;
  double std = 0.0;
  int episodes = 0;
};

/// A training episode that ended in failure.
struct FailureTrace {
  long train_step = 0;
  std::vector<int> disturbances;
  std::vector<double> rewards;
};

struct TrainResult {
  LearningCurve curve;
  long episodes = 0;
  long failures_discovered = 0;
  std::optional<FailureTrace> first_failure;
};

/// Called after every training step with the 1-based step count, the
/// online network and the current target network.
using StepCallback =
    std::function<void(long step, const QArchitecture& online, const QArchitecture& target)>;

/// Linear decay from epsilon_start to epsilon_end over the first
/// epsilon_decay_fraction of training, then constant.
double epsilon_at(long step, const DqnConfig& cfg);

/// Uniform index with probability epsilon, otherwise argmax (lowest index on
/// ties).
int epsilon_greedy(const Vec& q, double epsilon, Rng& rng);

/// r when terminal, else r + gamma * Q_target(s', argmax_x Q_online(s', x)).
double td_target(double reward, const Vec& next_state, bool terminal, const QArchitecture& online,
                 const QArchitecture& target, double gamma);

/// Greedy (epsilon = 0) episodes with undiscounted returns; episode e uses
/// a generator seeded with derive_seed(seed, e). Std is the population std.
EvalStats evaluate(const env::EnvFactory& factory, const QArchitecture& arch, int episodes,
                   std::uint64_t seed);

/// Full training loop. Deterministic given cfg.seed. Throws
/// TrainingDiverged on a non-finite loss.
TrainResult train(const env::EnvFactory& factory, QArchitecture& arch, const DqnConfig& cfg,
                  const StepCallback& on_step = {});

}  // namespace svt::dqn
