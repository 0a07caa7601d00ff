#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/env.hpp"
#include "trajdiff/keyvalue.hpp"
#include "trajdiff/ksim.hpp"
#include "trajdiff/planner.hpp"
#include "trajdiff/reward_guide.hpp"
#include "trajdiff/rnd_guide.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trajdiff {

/// Every tunable of a run. Serialized as key/value text; a run directory
/// stores the exact config that produced it.
struct ExperimentConfig {
  std::string maze = "umaze";
  std::uint64_t seed = 1;

  DatasetParams data;  // data.seed is derived from `seed`

  int horizon = 32;
  int stride = 1;
  double discount = 0.99;

  int diffusion_steps = 50;
  double cosine_offset = 0.008;
  DenoiserConfig denoiser;
  GuideNetConfig reward_net;
  RndConfig rnd;

  TrainOptions train_diffusion;
  TrainOptions train_reward;
  TrainOptions train_rnd;

  GuidanceConfig guidance;
  int replan_every = 4;
  bool clip_denoised = true;

  int eval_episodes = 50;
  int eval_groups = 5;
  /// Fresh seed groups for the best-lambda versus lambda = 0 comparison
  /// run after a sweep; 0 disables it.
  int confirm_groups = 10;
  std::vector<double> sweep_lambdas;

  KSimParams ksim;

  std::string out = "runs/default";

  ExperimentConfig();

  KeyValues to_kv() const;
  /// Missing keys keep their defaults; unknown keys are an error.
  static ExperimentConfig from_kv(const KeyValues& kv);
  static ExperimentConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;

  MazeSpec maze_spec() const { return maze_by_name(maze); }
  WindowShape window_shape() const { return {horizon, kStateDim, kActionDim}; }
  NoiseSchedule schedule() const { return NoiseSchedule::cosine(diffusion_steps, cosine_offset); }
  DatasetParams dataset_params() const;
  PlannerConfig planner_config() const;

  /// Digests of the settings each artifact depends on; each includes the
  /// digests of its upstream stages.
  std::uint64_t data_hash() const;
  std::uint64_t diffusion_hash() const;
  std::uint64_t reward_hash() const;
  std::uint64_t rnd_hash() const;

  // Derived seeds, one stream per stage.
  std::uint64_t data_seed() const { return derive_seed(seed, 1); }
  std::uint64_t diffusion_seed() const { return derive_seed(seed, 2); }
  std::uint64_t reward_seed() const { return derive_seed(seed, 3); }
  std::uint64_t rnd_seed() const { return derive_seed(seed, 4); }
  std::uint64_t rnd_target_seed() const { return derive_seed(seed, 5); }
  std::uint64_t ksim_seed() const { return derive_seed(seed, 6); }
  std::vector<std::uint64_t> eval_group_seeds() const;
  std::vector<std::uint64_t> confirm_group_seeds() const;
};

}  // namespace trajdiff
