#include "svt/nn.hpp"

#include <string>

#include "svt/errors.hpp"

namespace svt::nn {

namespace {

std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

GradientBuffer GradientBuffer::zeros_like(const std::vector<Mat*>& params) {
  GradientBuffer g;
  g.blocks.reserve(params.size());
  for (const Mat* p : params) g.blocks.push_back(Mat::Zero(p->rows(), p->cols()));
  return g;
}

void GradientBuffer::zero() {
  for (Mat& b : blocks) b.setZero();
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw InvalidArchitecture("an Mlp needs at least an input and an output size");
  }
  for (int s : sizes_) {
    if (s < 1) throw InvalidArchitecture("layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.push_back(Mat::Zero(sizes_[l + 1], sizes_[l]));
    biases_.push_back(Mat::Zero(sizes_[l + 1], 1));
  }
}

Mlp Mlp::xavier(std::vector<int> layer_sizes, Rng& rng) {
  Mlp net(std::move(layer_sizes));
  for (Mat& w : net.weights_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    // Filled column-major so the draw order is fixed by the storage order.
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
  }
  return net;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (sizes_.empty()) throw ShapeError("forward on an empty Mlp");
  if (rows != sizes_.front()) {
    throw ShapeError("Mlp input has " + std::to_string(rows) + " rows, expected " +
                     std::to_string(sizes_.front()));
  }
}

Vec Mlp::forward(const Vec& x) const {
  check_input(x.size());
  Vec h = x;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Vec z = weights_[l] * h + biases_[l].col(0);
    h = l < last ? Vec(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Mat Mlp::forward(const Mat& x) const {
  check_input(x.rows());
  Mat h = x;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Mat z = weights_[l] * h;
    z.colwise() += biases_[l].col(0);
    if (l < last) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Mat Mlp::forward(const Mat& x, Trace& trace) const {
  check_input(x.rows());
  const int n = num_layers();
  trace.inputs.resize(n);
  trace.pre.resize(n);
  trace.inputs[0] = x;
  for (int l = 0; l < n; ++l) {
    trace.pre[l] = weights_[l] * trace.inputs[l];
    trace.pre[l].colwise() += biases_[l].col(0);
    if (l + 1 < n) trace.inputs[l + 1] = trace.pre[l].cwiseMax(0.0);
  }
  return trace.pre[n - 1];
}

Mat Mlp::backward(const Trace& trace, const Mat& output_grad, std::span<Mat> grads) const {
  const int n = num_layers();
  if (static_cast<int>(trace.pre.size()) != n || output_grad.rows() != output_dim() ||
      output_grad.cols() != trace.pre[n - 1].cols()) {
    throw ShapeError("Mlp backward: output gradient " + shape_of(output_grad) +
                     " does not match the forward trace");
  }
  if (!grads.empty() && grads.size() != 2 * static_cast<std::size_t>(n)) {
    throw ShapeError("Mlp backward: gradient buffer has the wrong number of blocks");
  }
  Mat delta = output_grad;
  for (int l = n - 1; l >= 0; --l) {
    if (l < n - 1) {
      // relu'(z) = 1 for z > 0, 0 otherwise (including z == 0).
      delta = delta.cwiseProduct((trace.pre[l].array() > 0.0).cast<double>().matrix());
    }
    if (!grads.empty()) {
      grads[2 * l].noalias() += delta * trace.inputs[l].transpose();
      grads[2 * l + 1] += delta.rowwise().sum();
    }
    delta = weights_[l].transpose() * delta;
  }
  return delta;
}

Mlp::BackwardResult Mlp::backward(const Vec& input, const Vec& output_grad) const {
  Trace trace;
  forward(Mat(input), trace);
  BackwardResult result;
  auto params = const_cast<Mlp*>(this)->parameters();
  result.grads = GradientBuffer::zeros_like(params);
  result.input_grad = backward(trace, Mat(output_grad), result.grads.blocks);
  return result;
}

std::vector<Mat*> Mlp::parameters() {
  std::vector<Mat*> out;
  for (int l = 0; l < num_layers(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Mat*> Mlp::parameters() const {
  std::vector<const Mat*> out;
  for (int l = 0; l < num_layers(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Mat* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

GradientBuffer Mlp::parameter_gradients(const Mat& x, const Mat& output_grad) const {
  Trace trace;
  forward(x, trace);
  auto grads = GradientBuffer::zeros_like(const_cast<Mlp*>(this)->parameters());
  backward(trace, output_grad, grads.blocks);
  return grads;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.sizes_ != b.sizes_) return false;
  for (int l = 0; l < a.num_layers(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// LinearTransform

LinearTransform::LinearTransform(int dim) : matrix_(Mat::Identity(dim, dim)) {
  if (dim < 1) throw InvalidArchitecture("transform dimension must be positive");
}

LinearTransform::LinearTransform(Mat matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() < 1) {
    throw ShapeError("transform matrix must be square, got " + shape_of(matrix_));
  }
}

LinearTransform LinearTransform::identity_with_noise(int dim, double noise, Rng& rng) {
  LinearTransform t(dim);
  if (noise > 0.0) {
    for (Eigen::Index i = 0; i < t.matrix_.size(); ++i) {
      t.matrix_.data()[i] += uniform(rng, -noise, noise);
    }
  }
  return t;
}

Mat LinearTransform::forward(const Mat& x) const {
  if (x.rows() != matrix_.cols()) {
    throw ShapeError("transform of dimension " + std::to_string(dim()) + " applied to " +
                     shape_of(x));
  }
  return matrix_ * x;
}

Mat LinearTransform::backward(const Mat& input, const Mat& output_grad, Mat* matrix_grad) const {
  if (output_grad.rows() != matrix_.rows() || input.cols() != output_grad.cols()) {
    throw ShapeError("transform backward shape mismatch");
  }
  if (matrix_grad) matrix_grad->noalias() += output_grad * input.transpose();
  return matrix_.transpose() * output_grad;
}

GradientBuffer LinearTransform::parameter_gradients(const Mat& x, const Mat& output_grad) const {
  GradientBuffer g;
  g.blocks.push_back(Mat::Zero(matrix_.rows(), matrix_.cols()));
  backward(x, output_grad, &g.blocks[0]);
  return g;
}

// ---------------------------------------------------------------------------

HuberResult huber_loss(double error, double delta) {
  const double a = std::abs(error);
  if (a <= delta) return {0.5 * error * error, error};
  return {delta * (a - 0.5 * delta), error > 0.0 ? delta : -delta};
}

void optimizer_step(const std::vector<Mat*>& params, const GradientBuffer& grads,
                    OptimizerState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradient blocks for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads.blocks[i].rows() || params[i]->cols() != grads.blocks[i].cols()) {
      throw ShapeError("optimizer: gradient block " + std::to_string(i) + " is " +
                       shape_of(grads.blocks[i]) + ", parameter is " + shape_of(*params[i]));
    }
  }
  ++state.step;
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      *params[i] -= state.learning_rate * grads.blocks[i];
    }
    return;
  }

  if (state.first_moment.empty()) {
    for (const Mat* p : params) {
      state.first_moment.push_back(Mat::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer: moment buffers do not match the parameter list");
  }
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    const Mat& g = grads.blocks[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    params[i]->array() -=
        state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Mat softmax_columns(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).unaryExpr([](double v) { return std::exp(v); }).matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

}  // namespace svt::nn
