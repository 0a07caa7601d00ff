#include "trajdiff/planner.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace trajdiff;

namespace {

const WindowShape kShape{8, 2, 2};

// eps = x / sqrt(1 - abar) predicts a clean window of zeros, so every plan
// is the normalized origin: zero actions under a symmetric action range.
NoisePredictor zero_model(const NoiseSchedule& s) {
  return [&s](const Matrix& x, std::span<const int> steps) {
    Matrix eps = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      eps.col(j) /= std::sqrt(1.0 - s.alpha_bars[static_cast<std::size_t>(steps[static_cast<std::size_t>(j)])]);
    return eps;
  };
}

// Plans a fixed normalized action in every row.
NoisePredictor constant_action_model(const NoiseSchedule& s, double ax, double ay) {
  return [&s, ax, ay](const Matrix& x, std::span<const int> steps) {
    Matrix x0 = Matrix::Zero(x.rows(), x.cols());
    for (int t = 0; t < kShape.horizon; ++t) {
      x0.row(t * 4 + 2).setConstant(ax);
      x0.row(t * 4 + 3).setConstant(ay);
    }
    Matrix eps = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double ab = s.alpha_bars[static_cast<std::size_t>(steps[static_cast<std::size_t>(j)])];
      eps.col(j) = (x.col(j) - std::sqrt(ab) * x0.col(j)) / std::sqrt(1.0 - ab);
    }
    return eps;
  };
}

NormStats symmetric_stats() { return NormStats({0.0, 0.0, -0.1, -0.1}, {1.0, 1.0, 0.1, 0.1}); }

PlannerConfig unguided(int replan_every) {
  PlannerConfig c;
  c.guided = false;
  c.replan_every = replan_every;
  return c;
}

}  // namespace

TEST(Planner, ZeroActionModelStaysAtStart) {
  const auto s = NoiseSchedule::cosine(10);
  const Planner p(MazeEnv(default_umaze()), zero_model(s), kShape, s, symmetric_stats(), nullptr, nullptr, unguided(4));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = p.rollout(seed);
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.length(), default_umaze().episode_limit);
    EXPECT_LT((r.final_state - p.start_state(seed).position).norm(), 1e-9);
    for (const auto& rp : r.replans) EXPECT_TRUE(rp.first_state_matches);
  }
}

TEST(Planner, ReplanCadence) {
  const auto s = NoiseSchedule::cosine(10);
  for (int every : {1, 3, kShape.horizon}) {
    const Planner p(MazeEnv(default_umaze()), zero_model(s), kShape, s, symmetric_stats(), nullptr, nullptr,
                    unguided(every));
    const auto r = p.rollout(1);
    const int limit = default_umaze().episode_limit;
    ASSERT_EQ(static_cast<int>(r.replans.size()), (limit + every - 1) / every);
    for (std::size_t k = 0; k < r.replans.size(); ++k) EXPECT_EQ(r.replans[k].env_step, static_cast<int>(k) * every);
  }
}

TEST(Planner, ReplanEveryHorizonIsOpenLoopWithinLimit) {
  auto maze = default_umaze();
  maze.episode_limit = kShape.horizon;
  const auto s = NoiseSchedule::cosine(10);
  const Planner p(MazeEnv(maze), zero_model(s), kShape, s, symmetric_stats(), nullptr, nullptr,
                  unguided(kShape.horizon));
  EXPECT_EQ(p.rollout(2).replans.size(), 1u);
}

TEST(Planner, ExecutesPlannedActionsWithinBox) {
  const auto s = NoiseSchedule::cosine(10);
  const Planner p(MazeEnv(default_umaze()), constant_action_model(s, 1.0, 0.5), kShape, s, symmetric_stats(),
                  nullptr, nullptr, unguided(4));
  const auto r = p.rollout(3);
  ASSERT_FALSE(r.steps.empty());
  EXPECT_NEAR(r.steps.front().action.x(), 0.1, 1e-9);
  EXPECT_NEAR(r.steps.front().action.y(), 0.05, 1e-9);
  for (const auto& st : r.steps) {
    EXPECT_LE(st.action.cwiseAbs().maxCoeff(), default_umaze().action_max + 1e-12);
    EXPECT_GE(st.state.minCoeff(), 0.0);
    EXPECT_LT(st.state.maxCoeff(), 1.0);
  }
}

TEST(Planner, BatchMatchesSingleRollouts) {
  const auto s = NoiseSchedule::cosine(10);
  const Denoiser d(kShape, {32, 2, 8}, 4);
  const Planner p(MazeEnv(default_umaze()), as_predictor(d), kShape, s, symmetric_stats(), nullptr, nullptr,
                  unguided(4));
  const std::vector<std::uint64_t> seeds = {11, 12, 13};
  const auto batch = p.rollout_batch(seeds);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const auto one = p.rollout(seeds[k]);
    ASSERT_EQ(one.length(), batch[k].length());
    EXPECT_LT((one.final_state - batch[k].final_state).norm(), 1e-9);
  }
}

TEST(Planner, RolloutIsDeterministic) {
  const auto s = NoiseSchedule::cosine(10);
  const Denoiser d(kShape, {32, 2, 8}, 4);
  const Planner p(MazeEnv(default_umaze()), as_predictor(d), kShape, s, symmetric_stats(), nullptr, nullptr,
                  unguided(4));
  const auto a = p.rollout(5), b = p.rollout(5);
  ASSERT_EQ(a.length(), b.length());
  for (int t = 0; t < a.length(); ++t) EXPECT_EQ(a.steps[static_cast<std::size_t>(t)].state, b.steps[static_cast<std::size_t>(t)].state);
}

TEST(Planner, SamplerFailureMarksEpisode) {
  const auto s = NoiseSchedule::cosine(10);
  const NoisePredictor broken = [](const Matrix& x, std::span<const int>) {
    return Matrix::Constant(x.rows(), x.cols(), std::nan("")).eval();
  };
  const Planner p(MazeEnv(default_umaze()), broken, kShape, s, symmetric_stats(), nullptr, nullptr, unguided(4));
  const auto r = p.rollout(1);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.failure.empty());
}

TEST(Planner, InvalidReplanRejected) {
  const auto s = NoiseSchedule::cosine(10);
  EXPECT_THROW(Planner(MazeEnv(default_umaze()), zero_model(s), kShape, s, symmetric_stats(), nullptr, nullptr,
                       unguided(kShape.horizon + 1)),
               std::invalid_argument);
}

TEST(Evaluate, AllSuccessRateIsOne) {
  RolloutRecord ok;
  ok.success = true;
  ok.steps.resize(7);
  const std::vector<std::vector<RolloutRecord>> groups = {{ok, ok}, {ok, ok, ok}};
  const auto s = summarize(groups);
  EXPECT_EQ(s.success_rate, 1.0);
  EXPECT_EQ(s.success_se, 0.0);
  EXPECT_EQ(s.episodes, 5);
  EXPECT_EQ(s.mean_steps_to_goal, 7.0);
}

TEST(Evaluate, GroupStandardError) {
  RolloutRecord ok, bad;
  ok.success = true;
  const std::vector<std::vector<RolloutRecord>> groups = {{ok, bad}, {ok, ok}, {bad, bad}};
  const auto s = summarize(groups);
  ASSERT_EQ(s.group_success.size(), 3u);
  EXPECT_DOUBLE_EQ(s.success_rate, 0.5);
  EXPECT_NEAR(s.success_se, std::sqrt(0.25 / 3.0), 1e-12);
  EXPECT_TRUE(std::isnan(summarize({{bad}}).mean_steps_to_goal));
}

TEST(Evaluate, SeedGroupsAreDisjointAndDeterministic) {
  const auto a = episode_seeds(1, 50), b = episode_seeds(2, 50);
  for (auto x : a)
    for (auto y : b) EXPECT_NE(x, y);
  EXPECT_EQ(a, episode_seeds(1, 50));
}

TEST(Evaluate, EstimatesFromDisjointSeedsConverge) {
  // Biased coin planner: success decided by the seed alone.
  auto rate = [](std::uint64_t group, int n) {
    int ok = 0;
    for (auto s : episode_seeds(group, n)) ok += (s % 10) < 3;
    return static_cast<double>(ok) / n;
  };
  const double small = std::abs(rate(1, 20) - rate(2, 20));
  const double large = std::abs(rate(1, 20000) - rate(2, 20000));
  EXPECT_LT(large, 0.02);
  EXPECT_LE(large, small + 0.02);
}
