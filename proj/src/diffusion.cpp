#include "trajdiff/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace trajdiff {

NoiseSchedule NoiseSchedule::from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  const auto n = betas.size() + 1;
  s.betas.assign(n, 0.0);
  s.alphas.assign(n, 1.0);
  s.alpha_bars.assign(n, 1.0);
  s.posterior_variance.assign(n, 0.0);
  s.posterior_coef_x0.assign(n, 1.0);
  s.posterior_coef_xt.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double b = betas[i - 1];
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta values must lie in (0, 1)");
    s.betas[i] = b;
    s.alphas[i] = 1.0 - b;
    s.alpha_bars[i] = s.alpha_bars[i - 1] * s.alphas[i];
    const double denom = 1.0 - s.alpha_bars[i];
    s.posterior_variance[i] = b * (1.0 - s.alpha_bars[i - 1]) / denom;
    s.posterior_coef_x0[i] = b * std::sqrt(s.alpha_bars[i - 1]) / denom;
    s.posterior_coef_xt[i] = (1.0 - s.alpha_bars[i - 1]) * std::sqrt(s.alphas[i]) / denom;
  }
  return s;
}

NoiseSchedule NoiseSchedule::cosine(int steps, double offset) {
  if (steps < 1) throw std::invalid_argument("cosine schedule needs steps >= 1");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    const double b = 1.0 - f(i) / f(i - 1);
    betas[static_cast<std::size_t>(i - 1)] = std::min(b, 0.999);
  }
  return from_betas(betas);
}

void NoiseSchedule::check_step(int i, int lowest) const {
  if (i < lowest || i > steps)
    throw std::out_of_range("diffusion step " + std::to_string(i) + " outside [" +
                            std::to_string(lowest) + ", " + std::to_string(steps) + "]");
}

Matrix forward_noise(const Matrix& clean, std::span<const int> steps, const Matrix& eps,
                     const NoiseSchedule& schedule) {
  if (clean.rows() != eps.rows() || clean.cols() != eps.cols())
    throw std::invalid_argument("forward_noise: noise shape differs from input");
  if (static_cast<Eigen::Index>(steps.size()) != clean.cols())
    throw std::invalid_argument("forward_noise: one step per column required");
  Matrix out(clean.rows(), clean.cols());
  for (Eigen::Index j = 0; j < clean.cols(); ++j) {
    const int i = steps[static_cast<std::size_t>(j)];
    schedule.check_step(i, 0);
    const double ab = schedule.alpha_bars[static_cast<std::size_t>(i)];
    out.col(j) = std::sqrt(ab) * clean.col(j) + std::sqrt(1.0 - ab) * eps.col(j);
  }
  return out;
}

TrajectoryWindow forward_noise(const TrajectoryWindow& window, int step, const RowMatrix& eps,
                               const NoiseSchedule& schedule) {
  if (eps.rows() != window.values.rows() || eps.cols() != window.values.cols())
    throw std::invalid_argument("forward_noise: noise shape differs from window");
  schedule.check_step(step, 0);
  const double ab = schedule.alpha_bars[static_cast<std::size_t>(step)];
  TrajectoryWindow out = window;
  out.values = std::sqrt(ab) * window.values + std::sqrt(1.0 - ab) * eps;
  return out;
}

void inpaint_first_state(Matrix& windows, const Matrix& states) {
  if (states.rows() == 0) return;
  if (states.cols() != windows.cols()) throw std::invalid_argument("inpaint: batch size mismatch");
  windows.topRows(states.rows()) = states;
}

Denoiser::Denoiser(WindowShape shape, DenoiserConfig config, std::uint64_t seed)
    : shape_(shape), config_(config) {
  Rng rng(seed);
  net_ = StepConditionedNet(shape.flat_size(), config.embed_dim,
                            std::vector<int>(static_cast<std::size_t>(config.hidden_layers), config.hidden_width),
                            shape.flat_size(), rng);
  auto& last = net_.mlp().layers().back();
  last.weight.setZero();
  last.bias.setZero();
}

Matrix Denoiser::predict_noise(const Matrix& windows, std::span<const int> steps) const {
  return net_.forward(windows, steps);
}

Checkpoint Denoiser::to_checkpoint() const {
  Checkpoint ck(kTag);
  ck.set_meta("horizon", std::to_string(shape_.horizon));
  ck.set_meta("state_dim", std::to_string(shape_.state_dim));
  ck.set_meta("action_dim", std::to_string(shape_.action_dim));
  ck.set_meta("hidden_width", std::to_string(config_.hidden_width));
  ck.set_meta("hidden_layers", std::to_string(config_.hidden_layers));
  ck.set_meta("embed_dim", std::to_string(config_.embed_dim));
  net_.save(ck, "eps");
  return ck;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& ck) {
  if (ck.tag() != kTag) throw std::runtime_error("not a denoiser checkpoint: " + ck.tag());
  Denoiser d;
  d.shape_ = {std::stoi(ck.meta("horizon")), std::stoi(ck.meta("state_dim")),
              std::stoi(ck.meta("action_dim"))};
  d.config_ = {std::stoi(ck.meta("hidden_width")), std::stoi(ck.meta("hidden_layers")),
               std::stoi(ck.meta("embed_dim"))};
  d.net_ = StepConditionedNet::load(ck, "eps");
  if (d.net_.window_dim() != d.shape_.flat_size())
    throw std::runtime_error("denoiser checkpoint shape is inconsistent");
  return d;
}

Denoiser train_denoiser(const Matrix& windows, WindowShape shape, const NoiseSchedule& schedule,
                        const DenoiserConfig& config, const TrainOptions& options,
                        std::vector<double>* loss_curve) {
  if (windows.cols() < 1) throw std::invalid_argument("train_denoiser: no training windows");
  if (windows.rows() != shape.flat_size()) throw std::invalid_argument("train_denoiser: window size mismatch");
  Denoiser model(shape, config, derive_seed(options.seed, 1));
  Adam opt(model.net().mlp(), {options.lr, 0.9, 0.999, 1e-8, options.clip_norm});
  Rng rng(derive_seed(options.seed, 2));
  std::uniform_int_distribution<Eigen::Index> pick(0, windows.cols() - 1);
  std::uniform_int_distribution<int> pick_step(1, schedule.steps);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int B = options.batch;
  const int dim = shape.flat_size();
  const int masked = shape.state_dim;  // leading entries hold the clean condition
  const double count = static_cast<double>(dim - masked) * B;
  Matrix clean(dim, B), eps(dim, B);
  std::vector<int> steps(static_cast<std::size_t>(B));
  auto grads = model.net().mlp().zero_gradients();
  Mlp::Tape tape;
  if (loss_curve) loss_curve->reserve(loss_curve->size() + static_cast<std::size_t>(options.steps));

  for (int it = 0; it < options.steps; ++it) {
    for (int b = 0; b < B; ++b) {
      clean.col(b) = windows.col(pick(rng));
      steps[static_cast<std::size_t>(b)] = pick_step(rng);
    }
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = gauss(rng);
    Matrix noisy = forward_noise(clean, steps, eps, schedule);
    noisy.topRows(masked) = clean.topRows(masked);

    const Matrix pred = model.net().forward(noisy, steps, tape);
    Matrix diff = pred - eps;
    diff.topRows(masked).setZero();
    const double loss = diff.squaredNorm() / count;
    if (!std::isfinite(loss))
      throw std::runtime_error("train_denoiser: non-finite loss at step " + std::to_string(it) +
                               " (lr=" + std::to_string(options.lr) + ")");
    if (loss_curve) loss_curve->push_back(loss);

    grads.set_zero();
    model.net().backward(tape, (2.0 / count) * diff, &grads);
    opt.step(model.net().mlp(), grads);
  }
  return model;
}

NoisePredictor as_predictor(const Denoiser& model) {
  return [&model](const Matrix& x, std::span<const int> steps) { return model.predict_noise(x, steps); };
}

Matrix posterior_mean(const Matrix& x_t, const Matrix& eps_pred, int step,
                      const NoiseSchedule& schedule, bool clip_denoised) {
  schedule.check_step(step);
  const auto i = static_cast<std::size_t>(step);
  const double ab = schedule.alpha_bars[i];
  Matrix x0 = (x_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
  if (clip_denoised) x0 = x0.cwiseMax(-1.0).cwiseMin(1.0);
  return schedule.posterior_coef_x0[i] * x0 + schedule.posterior_coef_xt[i] * x_t;
}

void apply_guidance(Matrix& mean, int step, const GuidanceFn& guidance, double alpha,
                    const NoiseSchedule& schedule, std::vector<int>& skips) {
  if (skips.size() != static_cast<std::size_t>(mean.cols())) skips.resize(static_cast<std::size_t>(mean.cols()), 0);
  const Matrix g = guidance(mean, step);
  if (g.rows() != mean.rows() || g.cols() != mean.cols())
    throw std::logic_error("guidance returned a gradient of the wrong shape");
  const double scale = alpha * schedule.posterior_variance[static_cast<std::size_t>(step)];
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    if (!g.col(j).allFinite()) {
      ++skips[static_cast<std::size_t>(j)];
      continue;
    }
    mean.col(j) += scale * g.col(j);
  }
}

SampleResult sample_batch(const NoisePredictor& model, const NoiseSchedule& schedule,
                          WindowShape shape, const Matrix& conditions, const GuidanceFn* guidance,
                          const SamplerOptions& options, std::span<const std::uint64_t> seeds) {
  const Eigen::Index B = static_cast<Eigen::Index>(seeds.size());
  if (conditions.cols() != B) throw std::invalid_argument("sample_batch: one seed per condition required");
  if (conditions.rows() != shape.state_dim) throw std::invalid_argument("sample_batch: condition size mismatch");
  const int dim = shape.flat_size();

  std::vector<Rng> rngs;
  rngs.reserve(seeds.size());
  for (auto s : seeds) rngs.emplace_back(s);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill_noise = [&](Matrix& z) {
    for (Eigen::Index j = 0; j < B; ++j) {
      auto& rng = rngs[static_cast<std::size_t>(j)];
      gauss.reset();  // drop the cached pair value so columns stay independent
      for (int k = 0; k < dim; ++k) z(k, j) = gauss(rng);
    }
  };

  SampleResult result;
  result.guidance_skips.assign(seeds.size(), 0);
  Matrix x(dim, B);
  fill_noise(x);
  inpaint_first_state(x, conditions);
  Matrix z(dim, B);
  for (int i = schedule.steps; i >= 1; --i) {
    const auto steps = uniform_steps(i, B);
    const Matrix eps = model(x, steps);
    Matrix mean = posterior_mean(x, eps, i, schedule, options.clip_denoised);
    if (guidance) {
      inpaint_first_state(mean, conditions);
      apply_guidance(mean, i, *guidance, options.alpha, schedule, result.guidance_skips);
    }
    if (i > 1) {
      fill_noise(z);
      x = mean + std::sqrt(schedule.posterior_variance[static_cast<std::size_t>(i)]) * z;
    } else {
      x = std::move(mean);
    }
    inpaint_first_state(x, conditions);
  }
  result.windows = std::move(x);
  return result;
}

TrajectoryWindow sample(const Denoiser& model, const NoiseSchedule& schedule, const NormStats& stats,
                        const Vector& current_state, const GuidanceFn* guidance,
                        const SamplerOptions& options, std::uint64_t seed, int* guidance_skips) {
  const auto shape = model.shape();
  if (current_state.size() != shape.state_dim) throw std::invalid_argument("sample: state size mismatch");
  const Matrix cond = stats.normalize_state(current_state);
  const std::uint64_t seeds[1] = {seed};
  auto res = sample_batch(as_predictor(model), schedule, shape, cond, guidance, options, seeds);
  if (guidance_skips) *guidance_skips = res.guidance_skips[0];
  auto window = stats.denormalize(TrajectoryWindow::from_flat(res.windows.col(0), shape, true));
  window.values.row(0).head(shape.state_dim) = current_state.transpose();
  return window;
}

}  // namespace trajdiff
