#pragma once

// Dense-network numerics: parameter containers, forward/backward passes,
// the Huber loss, optimizers and a finite-difference gradient oracle.
//
// Batched routines take one sample per column. All arithmetic is double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "svt/random.hpp"

namespace svt::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Per-parameter accumulators, one block per entry of the owner's
/// trainable_parameters() listing and in the same order.
struct GradientBuffer {
  std::vector<Mat> blocks;

  static GradientBuffer zeros_like(const std::vector<Mat*>& params);
  void zero();
  std::size_t size() const { return blocks.size(); }
};

/// Fully connected network. Hidden layers use relu (subgradient 0 at 0),
/// the output layer is linear.
class Mlp {
 public:
  /// Activations and pre-activations retained by a training forward pass.
  struct Trace {
    std::vector<Mat> inputs;  // inputs[l] feeds layer l
    std::vector<Mat> pre;     // pre[l] = W_l inputs[l] + b_l
  };

  Mlp() = default;
  /// All-zero parameters. Throws InvalidArchitecture on an empty or
  /// non-positive size list.
  explicit Mlp(std::vector<int> layer_sizes);
  static Mlp xavier(std::vector<int> layer_sizes, Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }

  Mat& weight(int l) { return weights_[l]; }
  const Mat& weight(int l) const { return weights_[l]; }
  /// Stored as an (out x 1) matrix so every parameter is a Mat.
  Mat& bias(int l) { return biases_[l]; }
  const Mat& bias(int l) const { return biases_[l]; }

  Vec forward(const Vec& x) const;
  Mat forward(const Mat& x) const;
  Mat forward(const Mat& x, Trace& trace) const;

  /// Backpropagates output_grad through a trace from forward(). Parameter
  /// gradients are added to grads (ordered as parameters()) unless grads is
  /// empty. Returns the gradient with respect to the input batch.
  Mat backward(const Trace& trace, const Mat& output_grad, std::span<Mat> grads) const;

  struct BackwardResult {
    GradientBuffer grads;
    Vec input_grad;
  };
  BackwardResult backward(const Vec& input, const Vec& output_grad) const;

  /// W0, b0, W1, b1, ...
  std::vector<Mat*> parameters();
  std::vector<const Mat*> parameters() const;
  std::size_t parameter_count() const;

  // Differentiable interface.
  std::vector<Mat*> trainable_parameters() { return parameters(); }
  GradientBuffer parameter_gradients(const Mat& x, const Mat& output_grad) const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> sizes_;
  std::vector<Mat> weights_;
  std::vector<Mat> biases_;
};

/// Square linear map without bias.
class LinearTransform {
 public:
  LinearTransform() = default;
  /// Identity of the given dimension.
  explicit LinearTransform(int dim);
  explicit LinearTransform(Mat matrix);
  /// Identity plus independent uniform noise in [-noise, noise] per entry.
  static LinearTransform identity_with_noise(int dim, double noise, Rng& rng);

  int dim() const { return static_cast<int>(matrix_.rows()); }
  Mat& matrix() { return matrix_; }
  const Mat& matrix() const { return matrix_; }

  Mat forward(const Mat& x) const;
  /// Adds d/dmatrix into *matrix_grad (if non-null); returns d/dinput.
  Mat backward(const Mat& input, const Mat& output_grad, Mat* matrix_grad) const;

  std::vector<Mat*> trainable_parameters() { return {&matrix_}; }
  GradientBuffer parameter_gradients(const Mat& x, const Mat& output_grad) const;

 private:
  Mat matrix_;
};

struct HuberResult {
  double value;
  double derivative;
};

/// e^2/2 inside [-delta, delta], delta(|e| - delta/2) outside.
HuberResult huber_loss(double error, double delta = 1.0);

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
  long step = 0;
};

/// One descent step on params using grads. Adam moments are created lazily
/// on the first call. Throws ShapeError when shapes disagree.
void optimizer_step(const std::vector<Mat*>& params, const GradientBuffer& grads,
                    OptimizerState& state);

template <class T>
concept Differentiable = requires(T& net, const Mat& x, const Mat& g) {
  { net.forward(x) } -> std::convertible_to<Mat>;
  { net.parameter_gradients(x, g) } -> std::same_as<GradientBuffer>;
  { net.trainable_parameters() } -> std::same_as<std::vector<Mat*>>;
};

/// Compares analytic gradients of the scalar sum(output_weights .* f(input))
/// against central differences with step h. Returns the largest
/// |analytic - numeric| / max(1e-6, |analytic| + |numeric|) over all
/// trainable parameter entries. Parameters are restored afterwards.
template <Differentiable T>
double gradient_check(T& net, const Mat& input, const Mat& output_weights, double h = 1e-5) {
  const GradientBuffer analytic = net.parameter_gradients(input, output_weights);
  auto objective = [&] { return Mat(net.forward(input)).cwiseProduct(output_weights).sum(); };
  double worst = 0.0;
  std::vector<Mat*> params = net.trainable_parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Mat& block = *params[p];
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double saved = block.data()[i];
      block.data()[i] = saved + h;
      const double up = objective();
      block.data()[i] = saved - h;
      const double down = objective();
      block.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.blocks[p].data()[i];
      const double rel = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Vec& v);

/// Column-wise softmax with max subtraction.
Mat softmax_columns(const Mat& logits);

}  // namespace svt::nn
