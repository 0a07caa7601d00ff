#include "trajdiff/rnd_guide.hpp"

#include "trajdiff/keyvalue.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace trajdiff {

namespace {

std::vector<int> hidden(int layers, int width) {
  return std::vector<int>(static_cast<std::size_t>(layers), width);
}

constexpr double kScaleMomentum = 0.99;

}  // namespace

RndPair::RndPair(WindowShape shape, RndConfig config, std::uint64_t target_seed,
                 std::uint64_t predictor_seed, int diffusion_steps)
    : shape_(shape), config_(config), target_seed_(target_seed) {
  Rng target_rng(target_seed);
  target_ = StepConditionedNet(shape.flat_size(), config.embed_dim,
                               hidden(config.target_layers, config.hidden_width), config.output_dim,
                               target_rng);
  target_.mlp().layers().front().weight *= config.target_gain;
  Rng predictor_rng(predictor_seed);
  predictor_ = StepConditionedNet(shape.flat_size(), config.embed_dim,
                                  hidden(config.predictor_layers, config.hidden_width),
                                  config.output_dim, predictor_rng);
  step_scale_.assign(static_cast<std::size_t>(diffusion_steps) + 1, 1.0);
}

RndPair RndPair::with_copied_predictor(WindowShape shape, RndConfig config,
                                       std::uint64_t target_seed, int diffusion_steps) {
  config.predictor_layers = config.target_layers;
  RndPair p(shape, config, target_seed, target_seed, diffusion_steps);
  p.predictor_ = p.target_;
  return p;
}

Vector RndPair::raw_curiosity(const Matrix& windows, std::span<const int> steps) const {
  const Matrix diff = predictor_.forward(windows, steps) - target_.forward(windows, steps);
  return diff.colwise().squaredNorm().transpose();
}

Vector RndPair::curiosity(const Matrix& windows, std::span<const int> steps) const {
  Vector c = raw_curiosity(windows, steps);
  if (config_.normalize_per_step)
    for (Eigen::Index j = 0; j < c.size(); ++j)
      c[j] /= step_scale_.at(static_cast<std::size_t>(steps[static_cast<std::size_t>(j)]));
  return c;
}

double RndPair::curiosity(const TrajectoryWindow& window, int step) const {
  const int steps[1] = {step};
  return curiosity(Matrix(window.flat()), steps)[0];
}

Matrix RndPair::curiosity_gradient(const Matrix& windows, int step) const {
  const auto steps = uniform_steps(step, windows.cols());
  Mlp::Tape pt, tt;
  const Matrix diff = predictor_.forward(windows, steps, pt) - target_.forward(windows, steps, tt);
  Matrix g = predictor_.backward(pt, 2.0 * diff, nullptr) - target_.backward(tt, 2.0 * diff, nullptr);
  if (config_.normalize_per_step) g /= step_scale_.at(static_cast<std::size_t>(step));
  return g;
}

std::uint64_t RndPair::target_checksum() const {
  const auto params = target_.mlp().flat_parameters();
  return fnv1a(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(double));
}

Checkpoint RndPair::to_checkpoint() const {
  Checkpoint ck(kTag);
  ck.set_meta("horizon", std::to_string(shape_.horizon));
  ck.set_meta("state_dim", std::to_string(shape_.state_dim));
  ck.set_meta("action_dim", std::to_string(shape_.action_dim));
  ck.set_meta("output_dim", std::to_string(config_.output_dim));
  ck.set_meta("hidden_width", std::to_string(config_.hidden_width));
  ck.set_meta("target_layers", std::to_string(config_.target_layers));
  ck.set_meta("predictor_layers", std::to_string(config_.predictor_layers));
  ck.set_meta("embed_dim", std::to_string(config_.embed_dim));
  ck.set_meta("target_gain", format_double(config_.target_gain));
  ck.set_meta("normalize_per_step", config_.normalize_per_step ? "true" : "false");
  ck.set_meta("target_seed", std::to_string(target_seed_));
  ck.set_meta("architecture", "mlp-silu;input=window+sin_step_embedding");
  ck.add({"step_scale", {static_cast<std::int64_t>(step_scale_.size())}, step_scale_});
  target_.save(ck, "target");
  predictor_.save(ck, "predictor");
  return ck;
}

RndPair RndPair::from_checkpoint(const Checkpoint& ck) {
  if (ck.tag() != kTag) throw std::runtime_error("not an RND checkpoint: " + ck.tag());
  RndPair p;
  p.shape_ = {std::stoi(ck.meta("horizon")), std::stoi(ck.meta("state_dim")),
              std::stoi(ck.meta("action_dim"))};
  p.config_.output_dim = std::stoi(ck.meta("output_dim"));
  p.config_.hidden_width = std::stoi(ck.meta("hidden_width"));
  p.config_.target_layers = std::stoi(ck.meta("target_layers"));
  p.config_.predictor_layers = std::stoi(ck.meta("predictor_layers"));
  p.config_.embed_dim = std::stoi(ck.meta("embed_dim"));
  p.config_.target_gain = std::stod(ck.meta("target_gain"));
  p.config_.normalize_per_step = ck.meta("normalize_per_step") == "true";
  p.target_seed_ = std::stoull(ck.meta("target_seed"));
  p.step_scale_ = ck.tensor("step_scale").data;
  p.target_ = StepConditionedNet::load(ck, "target");
  p.predictor_ = StepConditionedNet::load(ck, "predictor");
  return p;
}

std::vector<LabeledWindow> select_success_windows(const std::vector<LabeledWindow>& windows) {
  std::vector<LabeledWindow> out;
  for (const auto& w : windows)
    if (w.label.success) out.push_back(w);
  return out;
}

RndPair train_rnd(const std::vector<LabeledWindow>& success_windows, WindowShape shape,
                  const NoiseSchedule& schedule, const RndConfig& config,
                  const TrainOptions& options, std::uint64_t target_seed, RndTrainReport* report) {
  if (success_windows.empty())
    throw std::invalid_argument("train_rnd: no successful windows; curiosity guidance is impossible");
  for (const auto& w : success_windows)
    if (!w.label.success)
      throw std::invalid_argument("train_rnd: window from a failed episode in the training set");

  const Matrix windows = stack_flat(success_windows);
  if (windows.rows() != shape.flat_size()) throw std::invalid_argument("train_rnd: window size mismatch");
  RndPair pair(shape, config, target_seed, derive_seed(options.seed, 21), schedule.steps);
  if (report) report->target_checksum_before = pair.target_checksum();

  Adam opt(pair.predictor().mlp(), {options.lr, 0.9, 0.999, 1e-8, options.clip_norm});
  Rng rng(derive_seed(options.seed, 22));
  std::uniform_int_distribution<Eigen::Index> pick(0, windows.cols() - 1);
  std::uniform_int_distribution<int> pick_step(1, schedule.steps);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int B = options.batch;
  const int dim = shape.flat_size();
  Matrix clean(dim, B), eps(dim, B);
  std::vector<int> steps(static_cast<std::size_t>(B));
  auto grads = pair.predictor().mlp().zero_gradients();
  Mlp::Tape tape;
  auto& scale = pair.step_scale();
  std::vector<std::uint8_t> scale_seen(scale.size(), 0);
  for (int it = 0; it < options.steps; ++it) {
    for (int b = 0; b < B; ++b) {
      const auto j = pick(rng);
      clean.col(b) = windows.col(j);
      steps[static_cast<std::size_t>(b)] = pick_step(rng);
      if (report) {
        ++report->windows_drawn;
        if (!success_windows[static_cast<std::size_t>(j)].label.success) ++report->failure_windows_drawn;
      }
    }
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = gauss(rng);
    Matrix noisy = forward_noise(clean, steps, eps, schedule);
    noisy.topRows(shape.state_dim) = clean.topRows(shape.state_dim);

    const Matrix target = pair.target().forward(noisy, steps);
    const Matrix diff = pair.predictor().forward(noisy, steps, tape) - target;
    const Eigen::RowVectorXd per_sample = diff.colwise().squaredNorm();
    const double loss = per_sample.sum() / B;
    if (!std::isfinite(loss)) throw std::runtime_error("train_rnd: non-finite loss at step " + std::to_string(it));
    if (report) report->loss_curve.push_back(loss);
    for (int b = 0; b < B; ++b) {
      const auto s = static_cast<std::size_t>(steps[static_cast<std::size_t>(b)]);
      scale[s] = scale_seen[s] ? kScaleMomentum * scale[s] + (1.0 - kScaleMomentum) * per_sample[b]
                               : per_sample[b];
      scale_seen[s] = 1;
    }
    grads.set_zero();
    pair.predictor().backward(tape, (2.0 / B) * diff, &grads);
    opt.step(pair.predictor().mlp(), grads);
  }
  for (auto& s : scale) s = std::max(s, 1e-12);
  if (report) report->target_checksum_after = pair.target_checksum();
  return pair;
}

Matrix g2(const Matrix& windows, int step, const RndPair& pair) {
  Matrix g = -pair.curiosity_gradient(windows, step);
  if (!g.allFinite()) throw std::domain_error("g2: non-finite curiosity gradient");
  return g;
}

RowMatrix g2(const TrajectoryWindow& window, int step, const RndPair& pair) {
  const Matrix g = g2(Matrix(window.flat()), step, pair);
  return Eigen::Map<const RowMatrix>(g.data(), window.values.rows(), window.values.cols());
}

void GuidanceConfig::validate() const {
  if (!(alpha >= 0)) throw std::invalid_argument("guidance alpha must be >= 0");
  if (!(lambda >= 0)) throw std::invalid_argument("guidance lambda must be >= 0");
}

Matrix combined_guidance(const Matrix& windows, int step, const ReturnPredictor* predictor,
                         const RndPair* pair, const GuidanceConfig& config, int* warnings) {
  config.validate();
  Matrix g = Matrix::Zero(windows.rows(), windows.cols());
  const bool reward = config.enable_reward && predictor;
  const bool curious = config.enable_curiosity && pair;
  if (config.enable_reward && !predictor) throw std::invalid_argument("reward guidance enabled without a predictor");
  if (config.enable_curiosity && !pair) throw std::invalid_argument("curiosity guidance enabled without an RND pair");
  if (!reward && !curious) {
    if (warnings) ++*warnings;
    return g;
  }
  if (reward) g += predictor->gradient(windows, step);
  if (curious && config.lambda != 0.0) g -= config.lambda * pair->curiosity_gradient(windows, step);
  return g;
}

GuidanceFn make_guidance(const ReturnPredictor* predictor, const RndPair* pair,
                         const GuidanceConfig& config) {
  config.validate();
  if (config.enable_reward && !predictor) throw std::invalid_argument("reward guidance enabled without a predictor");
  if (config.enable_curiosity && !pair) throw std::invalid_argument("curiosity guidance enabled without an RND pair");
  if (!config.enable_reward && !config.enable_curiosity)
    std::cerr << "warning: both guides disabled; guidance is zero\n";
  return [predictor, pair, config](const Matrix& mean, int step) {
    return combined_guidance(mean, step, predictor, pair, config);
  };
}

}  // namespace trajdiff
