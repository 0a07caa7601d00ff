#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/env.hpp"
#include "trajdiff/rnd_guide.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trajdiff {

struct PlannerConfig {
  int replan_every = 4;
  bool guided = true;
  GuidanceConfig guidance;
  bool clip_denoised = true;
};

struct StepRecord {
  Vec2 state;   // before the action
  Vec2 action;  // executed (clamped) action
  double reward = 0.0;
};

struct ReplanRecord {
  int env_step = 0;
  int guidance_skips = 0;
  double plan_curiosity = 0.0;  // at diffusion step 1; 0 without an RND pair
  bool first_state_matches = false;
};

struct RolloutRecord {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Vec2 final_state{0.0, 0.0};
  bool success = false;
  std::vector<ReplanRecord> replans;
  std::string failure;  // sampler diagnostic, empty when none

  int length() const { return static_cast<int>(steps.size()); }
  Episode to_episode() const;
};

/// Samples a plan from the current state, executes its first `replan_every`
/// actions and repeats until the episode ends.
class Planner {
 public:
  /// The model, schedule and guides are held by reference and must outlive
  /// the planner.
  Planner(MazeEnv env, NoisePredictor model, WindowShape shape, const NoiseSchedule& schedule,
          NormStats stats, const ReturnPredictor* predictor, const RndPair* pair,
          PlannerConfig config);

  const PlannerConfig& config() const { return config_; }
  const MazeEnv& env() const { return env_; }

  RolloutRecord rollout(std::uint64_t seed) const;
  /// Runs episodes side by side, sharing one batched sampler call per replan.
  /// Each episode's result depends only on its own seed and the batch layout.
  std::vector<RolloutRecord> rollout_batch(std::span<const std::uint64_t> seeds) const;

  /// Start state for an episode seed.
  EnvState start_state(std::uint64_t seed) const;

 private:
  MazeEnv env_;
  NoisePredictor model_;
  WindowShape shape_;
  const NoiseSchedule& schedule_;
  NormStats stats_;
  const ReturnPredictor* predictor_;
  const RndPair* pair_;
  PlannerConfig config_;
  GuidanceFn guidance_;
};

struct EvalSummary {
  int episodes = 0;
  double success_rate = 0.0;
  double success_se = 0.0;            // standard error across groups
  std::vector<double> group_success;  // one rate per seed group
  double mean_steps_to_goal = 0.0;    // over successful episodes, NaN if none
  double mean_plan_curiosity = 0.0;
  int guidance_skips = 0;
  int sampler_failures = 0;
};

/// Episode e of group g uses seed derive_seed(group_seeds[g], e).
std::vector<std::uint64_t> episode_seeds(std::uint64_t group_seed, int episodes);

EvalSummary summarize(const std::vector<std::vector<RolloutRecord>>& groups);
EvalSummary evaluate(const Planner& planner, int episodes_per_group,
                     std::span<const std::uint64_t> group_seeds,
                     std::vector<std::vector<RolloutRecord>>* records = nullptr);

}  // namespace trajdiff
