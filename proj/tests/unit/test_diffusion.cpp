#include "trajdiff/diffusion.hpp"

#include "../support/gmm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace trajdiff;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

std::vector<std::uint64_t> seeds(int n, std::uint64_t base) {
  std::vector<std::uint64_t> s;
  for (int k = 0; k < n; ++k) s.push_back(derive_seed(base, static_cast<std::uint64_t>(k)));
  return s;
}

double correlation(const Matrix& a, const Matrix& b) {
  const Eigen::ArrayXd x = Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size());
  const Eigen::ArrayXd y = Eigen::Map<const Eigen::ArrayXd>(b.data(), b.size());
  const double mx = x.mean(), my = y.mean();
  return ((x - mx) * (y - my)).sum() / std::sqrt((x - mx).square().sum() * (y - my).square().sum());
}

}  // namespace

TEST(Schedule, CosineIsMonotoneAndBounded) {
  const auto s = NoiseSchedule::cosine(50);
  ASSERT_EQ(s.alpha_bars.size(), 51u);
  EXPECT_EQ(s.alpha_bars[0], 1.0);
  for (int i = 1; i <= 50; ++i) {
    EXPECT_LT(s.alpha_bars[i], s.alpha_bars[i - 1]);
    EXPECT_GT(s.betas[i], 0.0);
    EXPECT_LE(s.betas[i], 0.999);
    EXPECT_NEAR(s.posterior_variance[i], s.betas[i] * (1 - s.alpha_bars[i - 1]) / (1 - s.alpha_bars[i]), 1e-15);
  }
  EXPECT_LT(s.alpha_bars[50], 1e-3);
}

TEST(Schedule, FromBetasProducts) {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2, 0.3});
  EXPECT_NEAR(s.alpha_bars[3], 0.9 * 0.8 * 0.7, 1e-15);
  EXPECT_THROW(s.check_step(4), std::out_of_range);
}

TEST(ForwardNoise, StepZeroIsIdentity) {
  const auto s = NoiseSchedule::cosine(50);
  const Matrix x = gaussian(8, 5, 1);
  const std::vector<int> steps(5, 0);
  EXPECT_EQ(forward_noise(x, steps, gaussian(8, 5, 2), s), x);
}

TEST(ForwardNoise, FinalStepForgetsInput) {
  const auto s = NoiseSchedule::cosine(50);
  const Matrix x = gaussian(16, 2000, 3);
  const Matrix eps = gaussian(16, 2000, 4);
  const std::vector<int> steps(2000, 50);
  const Matrix out = forward_noise(x, steps, eps, s);
  EXPECT_LT(std::abs(correlation(out, x)), 0.1);
  EXPECT_GT(correlation(out, eps), 0.99);
}

TEST(ForwardNoise, VarianceMatchesClosedForm) {
  const auto s = NoiseSchedule::cosine(50);
  const int draws = 10000;
  // Clean data with variance 0.25 around 0.3.
  Matrix x = 0.5 * gaussian(1, draws, 5);
  x.array() += 0.3;
  const double var_x = (x.array() - x.mean()).square().sum() / (draws - 1);
  for (int i : {5, 20, 40}) {
    const std::vector<int> steps(draws, i);
    const Matrix out = forward_noise(x, steps, gaussian(1, draws, 6 + i), s);
    const double var = (out.array() - out.mean()).square().sum() / (draws - 1);
    const double expected = s.alpha_bars[i] * var_x + (1 - s.alpha_bars[i]);
    EXPECT_NEAR(var / expected, 1.0, 0.05) << "step " << i;
  }
}

TEST(PosteriorMean, MatchesClosedFormWithTrueNoise) {
  const auto s = NoiseSchedule::cosine(50);
  const Matrix x0 = 0.3 * gaussian(6, 4, 7);
  const Matrix eps = gaussian(6, 4, 8);
  for (int i : {1, 10, 49}) {
    const std::vector<int> steps(4, i);
    const Matrix xt = forward_noise(x0, steps, eps, s);
    const Matrix mean = posterior_mean(xt, eps, i, s, false);
    const Matrix expected = s.posterior_coef_x0[i] * x0 + s.posterior_coef_xt[i] * xt;
    EXPECT_LT((mean - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Guidance, ShiftsMeanByScaledVariance) {
  const auto s = NoiseSchedule::cosine(50);
  Matrix mean = Matrix::Zero(3, 2);
  std::vector<int> skips;
  const GuidanceFn g = [](const Matrix& m, int) {
    Matrix out = Matrix::Ones(m.rows(), m.cols());
    out(0, 1) = std::nan("");
    return out;
  };
  apply_guidance(mean, 7, g, 2.0, s, skips);
  EXPECT_NEAR(mean(1, 0), 2.0 * s.posterior_variance[7], 1e-15);
  EXPECT_EQ(mean.col(1), Eigen::Vector3d::Zero());
  ASSERT_EQ(skips.size(), 2u);
  EXPECT_EQ(skips[0], 0);
  EXPECT_EQ(skips[1], 1);
}

TEST(Inpaint, OverwritesLeadingStateOnly) {
  Matrix w = Matrix::Zero(8, 2);
  Matrix c(2, 2);
  c << 1, 2, 3, 4;
  inpaint_first_state(w, c);
  EXPECT_EQ(w(0, 0), 1);
  EXPECT_EQ(w(1, 0), 3);
  EXPECT_EQ(w(0, 1), 2);
  EXPECT_EQ(w.bottomRows(6).cwiseAbs().sum(), 0.0);
}

TEST(Denoiser, ZeroOutputAtInit) {
  const WindowShape shape{4, 2, 2};
  const Denoiser d(shape, {64, 2, 16}, 3);
  const std::vector<int> steps(3, 10);
  EXPECT_EQ(d.predict_noise(gaussian(shape.flat_size(), 3, 1), steps).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Denoiser, TrainingIsDeterministicAndReducesLoss) {
  const WindowShape shape{4, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const Matrix data = 0.5 * gaussian(shape.flat_size(), 256, 11).array().tanh();
  TrainOptions opt{300, 32, 1e-3, 1.0, 5};
  std::vector<double> curve_a, curve_b;
  const auto a = train_denoiser(data, shape, s, {64, 2, 16}, opt, &curve_a);
  const auto b = train_denoiser(data, shape, s, {64, 2, 16}, opt, &curve_b);
  EXPECT_EQ(a.net().mlp().flat_parameters(), b.net().mlp().flat_parameters());
  EXPECT_EQ(curve_a, curve_b);
  const double head = std::accumulate(curve_a.begin(), curve_a.begin() + 30, 0.0) / 30;
  const double tail = std::accumulate(curve_a.end() - 30, curve_a.end(), 0.0) / 30;
  EXPECT_LT(tail, head);
}

TEST(Denoiser, CheckpointRoundTrip) {
  const WindowShape shape{4, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const auto d = train_denoiser(0.3 * gaussian(16, 64, 2), shape, s, {32, 2, 8}, {20, 16, 1e-3, 1.0, 1});
  const auto back = Denoiser::from_checkpoint(Checkpoint::deserialize(d.to_checkpoint().serialize()));
  EXPECT_EQ(back.net().mlp().flat_parameters(), d.net().mlp().flat_parameters());
  EXPECT_EQ(back.shape().horizon, 4);
}

TEST(Sampler, FirstStateEqualsConditioningExactly) {
  const WindowShape shape{8, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const Denoiser d(shape, {32, 2, 8}, 4);
  const NormStats stats({0.0, 0.0, -0.1, -0.1}, {1.0, 1.0, 0.1, 0.1});
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const Vector state = Eigen::Vector2d(u(rng), u(rng));
    const auto w = sample(d, s, stats, state, nullptr, {}, static_cast<std::uint64_t>(k));
    EXPECT_EQ(w.values(0, 0), state[0]);
    EXPECT_EQ(w.values(0, 1), state[1]);
  }
}

TEST(Sampler, ZeroGuidanceIsIdenticalToNone) {
  const WindowShape shape{8, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const Denoiser d(shape, {32, 2, 8}, 4);
  const auto model = as_predictor(d);
  const Matrix cond = 0.2 * gaussian(2, 6, 3);
  const auto sd = seeds(6, 10);
  const GuidanceFn zero = [](const Matrix& m, int) { return Matrix::Zero(m.rows(), m.cols()).eval(); };
  const auto a = sample_batch(model, s, shape, cond, nullptr, {5.0, true}, sd);
  const auto b = sample_batch(model, s, shape, cond, &zero, {5.0, true}, sd);
  EXPECT_EQ(a.windows, b.windows);
}

TEST(Sampler, PerColumnSeedsIndependentOfBatch) {
  const WindowShape shape{8, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const Denoiser d(shape, {32, 2, 8}, 4);
  const auto model = as_predictor(d);
  const Matrix cond = 0.2 * gaussian(2, 4, 3);
  const auto sd = seeds(4, 10);
  const auto all = sample_batch(model, s, shape, cond, nullptr, {}, sd);
  const std::vector<std::uint64_t> one = {sd[2]};
  const auto single = sample_batch(model, s, shape, cond.col(2), nullptr, {}, one);
  EXPECT_LT((all.windows.col(2) - single.windows.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, GuidanceTowardTargetPullsSamplesCloser) {
  const WindowShape shape{8, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  const Denoiser d(shape, {32, 2, 8}, 4);
  const auto model = as_predictor(d);
  const int n = 64;
  const Matrix cond = Matrix::Zero(2, n);
  Vector target = Vector::Constant(shape.flat_size(), 0.6);
  target.head(2).setZero();
  const GuidanceFn pull = [&](const Matrix& m, int) {
    return (-2.0 * (m.colwise() - target)).eval();
  };
  const auto sd = seeds(n, 77);
  const auto plain = sample_batch(model, s, shape, cond, nullptr, {}, sd);
  const auto guided = sample_batch(model, s, shape, cond, &pull, {20.0, true}, sd);
  const double d_plain = (plain.windows.colwise() - target).squaredNorm() / n;
  const double d_guided = (guided.windows.colwise() - target).squaredNorm() / n;
  EXPECT_LT(d_guided, d_plain);
}

TEST(Sampler, NonFiniteGuidanceIsSkippedAndCounted) {
  const WindowShape shape{4, 2, 2};
  const auto s = NoiseSchedule::cosine(10);
  const Denoiser d(shape, {32, 2, 8}, 4);
  const GuidanceFn bad = [](const Matrix& m, int) {
    Matrix g = Matrix::Zero(m.rows(), m.cols());
    g(3, 0) = std::numeric_limits<double>::infinity();
    return g;
  };
  const auto sd = seeds(2, 1);
  const auto r = sample_batch(as_predictor(d), s, shape, Matrix::Zero(2, 2), &bad, {1.0, true}, sd);
  ASSERT_EQ(r.guidance_skips.size(), 2u);
  EXPECT_EQ(r.guidance_skips[0], 10);
  EXPECT_EQ(r.guidance_skips[1], 0);
  EXPECT_TRUE(r.windows.allFinite());
}

TEST(Denoiser, ConstantWindowsAreReproduced) {
  const WindowShape shape{4, 2, 2};
  const auto s = NoiseSchedule::cosine(20);
  Vector c(16);
  for (int k = 0; k < 16; ++k) c[k] = 0.5 * std::sin(k + 1.0);
  const Matrix data = c.replicate(1, 128);
  const auto d = train_denoiser(data, shape, s, {128, 2, 16}, {3000, 64, 1e-3, 1.0, 2});
  const int n = 256;
  const Matrix cond = c.head(2).replicate(1, n);
  const auto r = sample_batch(as_predictor(d), s, shape, cond, nullptr, {}, seeds(n, 3));
  const Vector mean = r.windows.rowwise().mean();
  EXPECT_LT((mean - c).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Denoiser, GaussianMixtureMomentsWithinTenPercent) {
  const auto m = testing_support::gaussian_mixture_moments();
  EXPECT_LE(m.mean_error, 0.1);
  EXPECT_LE(m.cov_error, 0.1);
}
