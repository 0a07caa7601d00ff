#include "trajdiff/reward_guide.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace trajdiff {

ReturnPredictor::ReturnPredictor(WindowShape shape, GuideNetConfig config, std::uint64_t seed)
    : shape_(shape), config_(config) {
  Rng rng(seed);
  net_ = StepConditionedNet(shape.flat_size(), config.embed_dim,
                            std::vector<int>(static_cast<std::size_t>(config.hidden_layers), config.hidden_width),
                            1, rng);
}

void ReturnPredictor::set_label_stats(double mean, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("label scale must be positive");
  label_mean_ = mean;
  label_scale_ = scale;
}

Vector ReturnPredictor::predict(const Matrix& windows, std::span<const int> steps) const {
  return net_.forward(windows, steps).row(0).transpose();
}

Vector ReturnPredictor::predict_return(const Matrix& windows, std::span<const int> steps) const {
  return (predict(windows, steps).array() * label_scale_ + label_mean_).matrix();
}

Matrix ReturnPredictor::gradient(const Matrix& windows, int step) const {
  const auto steps = uniform_steps(step, windows.cols());
  Mlp::Tape tape;
  net_.forward(windows, steps, tape);
  return net_.backward(tape, Matrix::Ones(1, windows.cols()), nullptr);
}

Checkpoint ReturnPredictor::to_checkpoint() const {
  Checkpoint ck(kTag);
  ck.set_meta("horizon", std::to_string(shape_.horizon));
  ck.set_meta("state_dim", std::to_string(shape_.state_dim));
  ck.set_meta("action_dim", std::to_string(shape_.action_dim));
  ck.set_meta("hidden_width", std::to_string(config_.hidden_width));
  ck.set_meta("hidden_layers", std::to_string(config_.hidden_layers));
  ck.set_meta("embed_dim", std::to_string(config_.embed_dim));
  ck.add({"label_stats", {2}, {label_mean_, label_scale_}});
  net_.save(ck, "value");
  return ck;
}

ReturnPredictor ReturnPredictor::from_checkpoint(const Checkpoint& ck) {
  if (ck.tag() != kTag) throw std::runtime_error("not a return-predictor checkpoint: " + ck.tag());
  ReturnPredictor p;
  p.shape_ = {std::stoi(ck.meta("horizon")), std::stoi(ck.meta("state_dim")),
              std::stoi(ck.meta("action_dim"))};
  p.config_ = {std::stoi(ck.meta("hidden_width")), std::stoi(ck.meta("hidden_layers")),
               std::stoi(ck.meta("embed_dim"))};
  const auto& stats = ck.tensor("label_stats").data;
  p.set_label_stats(stats.at(0), stats.at(1));
  p.net_ = StepConditionedNet::load(ck, "value");
  return p;
}

ReturnPredictor train_return(const Matrix& windows, const std::vector<double>& returns,
                             WindowShape shape, const NoiseSchedule& schedule,
                             const GuideNetConfig& config, const TrainOptions& options,
                             ReturnTrainReport* report) {
  if (windows.cols() < 1) throw std::invalid_argument("train_return: no training windows");
  if (static_cast<Eigen::Index>(returns.size()) != windows.cols())
    throw std::invalid_argument("train_return: one label per window required");

  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(returns.size());
  const bool degenerate = var <= 1e-12;
  if (degenerate)
    std::cerr << "warning: train_return: all labels are equal; reward guidance will be ~0\n";
  if (report) report->degenerate_labels = degenerate;

  ReturnPredictor model(shape, config, derive_seed(options.seed, 11));
  model.set_label_stats(mean, degenerate ? 1.0 : std::sqrt(var));
  Vector targets(windows.cols());
  for (Eigen::Index j = 0; j < windows.cols(); ++j)
    targets[j] = (returns[static_cast<std::size_t>(j)] - mean) / model.label_scale();

  Adam opt(model.net().mlp(), {options.lr, 0.9, 0.999, 1e-8, options.clip_norm});
  Rng rng(derive_seed(options.seed, 12));
  std::uniform_int_distribution<Eigen::Index> pick(0, windows.cols() - 1);
  std::uniform_int_distribution<int> pick_step(1, schedule.steps);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int B = options.batch;
  const int dim = shape.flat_size();
  Matrix clean(dim, B), eps(dim, B);
  Eigen::RowVectorXd y(B);
  std::vector<int> steps(static_cast<std::size_t>(B));
  auto grads = model.net().mlp().zero_gradients();
  Mlp::Tape tape;
  for (int it = 0; it < options.steps; ++it) {
    for (int b = 0; b < B; ++b) {
      const auto j = pick(rng);
      clean.col(b) = windows.col(j);
      y[b] = targets[j];
      steps[static_cast<std::size_t>(b)] = pick_step(rng);
    }
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = gauss(rng);
    Matrix noisy = forward_noise(clean, steps, eps, schedule);
    noisy.topRows(shape.state_dim) = clean.topRows(shape.state_dim);

    const Matrix pred = model.net().forward(noisy, steps, tape);
    const Eigen::RowVectorXd diff = pred.row(0) - y;
    const double loss = diff.squaredNorm() / B;
    if (!std::isfinite(loss))
      throw std::runtime_error("train_return: non-finite loss at step " + std::to_string(it));
    if (report) report->loss_curve.push_back(loss);
    grads.set_zero();
    model.net().backward(tape, (2.0 / B) * diff, &grads);
    opt.step(model.net().mlp(), grads);
  }
  return model;
}

Matrix g1(const Matrix& windows, int step, const ReturnPredictor& predictor) {
  Matrix g = predictor.gradient(windows, step);
  if (!g.allFinite()) throw std::domain_error("g1: non-finite reward gradient");
  return g;
}

RowMatrix g1(const TrajectoryWindow& window, int step, const ReturnPredictor& predictor) {
  const Matrix g = g1(Matrix(window.flat()), step, predictor);
  return Eigen::Map<const RowMatrix>(g.data(), window.values.rows(), window.values.cols());
}

}  // namespace trajdiff
