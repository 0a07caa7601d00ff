#pragma once

#include "trajdiff/checkpoint.hpp"
#include "trajdiff/random.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace trajdiff {

/// Column-per-sample batch: features x batch.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void set_zero();
  double squared_norm() const;
  void scale(double s);
};

/// Fully connected network, SiLU between layers, linear output. Gradients
/// are derived by hand in `backward`.
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// `widths` = {input, hidden..., output}. Weights and biases are drawn
  /// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(const std::vector<int>& widths, Rng& rng);

  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  std::vector<int> widths() const;
  std::size_t parameter_count() const;

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  /// Back-propagates `grad_out` (dL/dy); returns dL/dx and, when `grads` is
  /// non-null, accumulates parameter gradients into it.
  Matrix backward(const Tape& tape, const Matrix& grad_out, MlpGradients* grads) const;

  MlpGradients zero_gradients() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Flattened copy of every parameter, layer by layer (weights then bias).
  std::vector<double> flat_parameters() const;

  void save(Checkpoint& ck, const std::string& prefix) const;
  static Mlp load(const Checkpoint& ck, const std::string& prefix);

 private:
  std::vector<DenseLayer> layers_;
};

class Adam {
 public:
  struct Options {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // global-norm clipping when > 0
  };

  Adam(const Mlp& net, Options opts);
  void step(Mlp& net, MlpGradients& grads);

 private:
  Options opts_;
  MlpGradients m_;
  MlpGradients v_;
  long long t_ = 0;
};

/// Sinusoidal embedding of a diffusion step: [sin(i f_k), cos(i f_k)] with
/// f_k = 10000^(-k / (dim/2 - 1)).
Vector step_embedding(int step, int dim);

/// MLP over a flattened window concatenated with the embedding of the
/// diffusion step. Shared by the denoiser and both guides.
class StepConditionedNet {
 public:
  StepConditionedNet() = default;
  StepConditionedNet(int window_dim, int embed_dim, const std::vector<int>& hidden, int output_dim,
                     Rng& rng);

  int window_dim() const { return window_dim_; }
  int embed_dim() const { return embed_dim_; }
  int output_dim() const { return net_.output_dim(); }

  Matrix make_input(const Matrix& windows, std::span<const int> steps) const;
  Matrix forward(const Matrix& windows, std::span<const int> steps) const;
  Matrix forward(const Matrix& windows, std::span<const int> steps, Mlp::Tape& tape) const;
  /// dL/d(window) for the batch; parameter gradients accumulated if requested.
  Matrix backward(const Mlp::Tape& tape, const Matrix& grad_out, MlpGradients* grads) const;

  Mlp& mlp() { return net_; }
  const Mlp& mlp() const { return net_; }

  void save(Checkpoint& ck, const std::string& prefix) const;
  static StepConditionedNet load(const Checkpoint& ck, const std::string& prefix);

 private:
  int window_dim_ = 0;
  int embed_dim_ = 0;
  Mlp net_;
};

std::vector<int> uniform_steps(int step, Eigen::Index count);

}  // namespace trajdiff
