#include "trajdiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace trajdiff {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix silu(const Matrix& z) {
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

NamedTensor to_tensor(const std::string& name, const Matrix& m) {
  NamedTensor t{name, {m.rows(), m.cols()}, {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), m.rows(), m.cols()) = m;
  return t;
}

NamedTensor to_tensor(const std::string& name, const Vector& v) {
  return NamedTensor{name, {v.size()}, std::vector<double>(v.data(), v.data() + v.size())};
}

}  // namespace

void MlpGradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

double MlpGradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weight) s += w.squaredNorm();
  for (const auto& b : bias) s += b.squaredNorm();
  return s;
}

void MlpGradients::scale(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
}

Mlp::Mlp(const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Matrix(out, in), Vector(out)};
    // Fill order is fixed (row-major over weight, then bias) for reproducibility.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    for (int r = 0; r < out; ++r) layer.bias[r] = u(rng);
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& l : layers_) w.push_back(static_cast<int>(l.weight.rows()));
  return w;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix Mlp::forward(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    h = l + 1 < layers_.size() ? silu(z) : std::move(z);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  tape.inputs.resize(layers_.size());
  tape.pre.resize(layers_.size());
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.inputs[l] = h;
    Matrix z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    tape.pre[l] = z;
    h = l + 1 < layers_.size() ? silu(z) : std::move(z);
  }
  return h;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& grad_out, MlpGradients* grads) const {
  if (tape.inputs.size() != layers_.size()) throw std::logic_error("Mlp::backward: tape does not match");
  Matrix g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size()) g = g.cwiseProduct(silu_grad(tape.pre[k]));
    if (grads) {
      grads->weight[k].noalias() += g * tape.inputs[k].transpose();
      grads->bias[k] += g.rowwise().sum();
    }
    g = layers_[k].weight.transpose() * g;
  }
  return g;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& l : layers_) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    const auto t = to_tensor("w", l.weight);
    out.insert(out.end(), t.data.begin(), t.data.end());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void Mlp::save(Checkpoint& ck, const std::string& prefix) const {
  ck.set_meta(prefix + ".layers", std::to_string(layers_.size()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto base = prefix + ".layer" + std::to_string(l);
    ck.add(to_tensor(base + ".weight", layers_[l].weight));
    ck.add(to_tensor(base + ".bias", layers_[l].bias));
  }
}

Mlp Mlp::load(const Checkpoint& ck, const std::string& prefix) {
  Mlp net;
  const auto n = std::stoul(ck.meta(prefix + ".layers"));
  for (std::size_t l = 0; l < n; ++l) {
    const auto base = prefix + ".layer" + std::to_string(l);
    const auto& w = ck.tensor(base + ".weight");
    const auto& b = ck.tensor(base + ".bias");
    if (w.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != w.shape[0])
      throw std::runtime_error("malformed layer tensors under " + base);
    DenseLayer layer;
    layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data.data(), w.shape[0], w.shape[1]);
    layer.bias = Eigen::Map<const Vector>(b.data.data(), b.shape[0]);
    if (!net.layers_.empty() && net.layers_.back().weight.rows() != layer.weight.cols())
      throw std::runtime_error("layer widths do not chain under " + base);
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

Adam::Adam(const Mlp& net, Options opts)
    : opts_(opts), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(Mlp& net, MlpGradients& grads) {
  if (opts_.clip_norm > 0) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > opts_.clip_norm) grads.scale(opts_.clip_norm / norm);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double step = opts_.lr * std::sqrt(c2) / c1;
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
    v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseAbs2();
    param.array() -= step * m.array() / (v.array().sqrt() + opts_.eps);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], m_.weight[l], v_.weight[l]);
    update(layers[l].bias, grads.bias[l], m_.bias[l], v_.bias[l]);
  }
}

Vector step_embedding(int step, int dim) {
  if (dim < 4 || dim % 2 != 0) throw std::invalid_argument("step_embedding: dim must be even and >= 4");
  const int half = dim / 2;
  Vector e(dim);
  const double scale = std::log(10000.0) / (half - 1);
  for (int k = 0; k < half; ++k) {
    const double arg = step * std::exp(-scale * k);
    e[k] = std::sin(arg);
    e[half + k] = std::cos(arg);
  }
  return e;
}

StepConditionedNet::StepConditionedNet(int window_dim, int embed_dim, const std::vector<int>& hidden,
                                       int output_dim, Rng& rng)
    : window_dim_(window_dim), embed_dim_(embed_dim) {
  std::vector<int> widths{window_dim + embed_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  net_ = Mlp(widths, rng);
}

Matrix StepConditionedNet::make_input(const Matrix& windows, std::span<const int> steps) const {
  if (windows.rows() != window_dim_) throw std::invalid_argument("StepConditionedNet: window size mismatch");
  if (static_cast<Eigen::Index>(steps.size()) != windows.cols())
    throw std::invalid_argument("StepConditionedNet: one step per column required");
  Matrix x(window_dim_ + embed_dim_, windows.cols());
  x.topRows(window_dim_) = windows;
  for (Eigen::Index j = 0; j < windows.cols(); ++j)
    x.col(j).tail(embed_dim_) = step_embedding(steps[static_cast<std::size_t>(j)], embed_dim_);
  return x;
}

Matrix StepConditionedNet::forward(const Matrix& windows, std::span<const int> steps) const {
  return net_.forward(make_input(windows, steps));
}

Matrix StepConditionedNet::forward(const Matrix& windows, std::span<const int> steps,
                                   Mlp::Tape& tape) const {
  return net_.forward(make_input(windows, steps), tape);
}

Matrix StepConditionedNet::backward(const Mlp::Tape& tape, const Matrix& grad_out,
                                    MlpGradients* grads) const {
  return net_.backward(tape, grad_out, grads).topRows(window_dim_);
}

void StepConditionedNet::save(Checkpoint& ck, const std::string& prefix) const {
  ck.set_meta(prefix + ".window_dim", std::to_string(window_dim_));
  ck.set_meta(prefix + ".embed_dim", std::to_string(embed_dim_));
  net_.save(ck, prefix);
}

StepConditionedNet StepConditionedNet::load(const Checkpoint& ck, const std::string& prefix) {
  StepConditionedNet n;
  n.window_dim_ = std::stoi(ck.meta(prefix + ".window_dim"));
  n.embed_dim_ = std::stoi(ck.meta(prefix + ".embed_dim"));
  n.net_ = Mlp::load(ck, prefix);
  if (n.net_.input_dim() != n.window_dim_ + n.embed_dim_)
    throw std::runtime_error("checkpoint input width disagrees with window/embedding sizes for " + prefix);
  return n;
}

std::vector<int> uniform_steps(int step, Eigen::Index count) {
  return std::vector<int>(static_cast<std::size_t>(count), step);
}

}  // namespace trajdiff
