#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/reward_guide.hpp"

#include <cstdint>
#include <vector>

namespace trajdiff {

struct RndConfig {
  int output_dim = 32;       // k
  int hidden_width = 256;
  int target_layers = 2;     // hidden layers of f_xi
  int predictor_layers = 3;  // hidden layers of f_eta
  int embed_dim = 32;
  /// Scales the target's first-layer weights. Larger values give a less
  /// smooth target and sharper novelty.
  double target_gain = 1.0;
  /// Divide curiosity by a per-step running mean recorded during training.
  bool normalize_per_step = false;
};

/// Random network distillation over noised windows: a frozen random target
/// f_xi and a trained predictor f_eta, both conditioned on the diffusion step.
class RndPair {
 public:
  static constexpr const char* kTag = "rnd";

  RndPair() = default;
  RndPair(WindowShape shape, RndConfig config, std::uint64_t target_seed,
          std::uint64_t predictor_seed, int diffusion_steps);
  /// Predictor is an exact copy of the target (curiosity identically 0).
  static RndPair with_copied_predictor(WindowShape shape, RndConfig config,
                                       std::uint64_t target_seed, int diffusion_steps);

  const WindowShape& shape() const { return shape_; }
  const RndConfig& config() const { return config_; }
  std::uint64_t target_seed() const { return target_seed_; }

  /// ||f_eta(x, i) - f_xi(x, i)||^2 (divided by the step scale when enabled).
  Vector curiosity(const Matrix& windows, std::span<const int> steps) const;
  double curiosity(const TrajectoryWindow& window, int step) const;
  /// Gradient of curiosity with respect to the window entries.
  Matrix curiosity_gradient(const Matrix& windows, int step) const;

  const StepConditionedNet& target() const { return target_; }
  const StepConditionedNet& predictor() const { return predictor_; }
  StepConditionedNet& predictor() { return predictor_; }
  /// FNV-1a over the target parameter bytes.
  std::uint64_t target_checksum() const;

  const std::vector<double>& step_scale() const { return step_scale_; }
  std::vector<double>& step_scale() { return step_scale_; }
  void set_normalize_per_step(bool on) { config_.normalize_per_step = on; }

  Checkpoint to_checkpoint() const;
  static RndPair from_checkpoint(const Checkpoint& ck);

 private:
  Vector raw_curiosity(const Matrix& windows, std::span<const int> steps) const;

  WindowShape shape_;
  RndConfig config_;
  std::uint64_t target_seed_ = 0;
  StepConditionedNet target_;
  StepConditionedNet predictor_;
  std::vector<double> step_scale_;  // index 0..N, running mean of raw curiosity
};

struct RndTrainReport {
  std::vector<double> loss_curve;
  std::uint64_t target_checksum_before = 0;
  std::uint64_t target_checksum_after = 0;
  std::size_t windows_drawn = 0;
  std::size_t failure_windows_drawn = 0;
};

/// Keeps the windows whose episode succeeded.
std::vector<LabeledWindow> select_success_windows(const std::vector<LabeledWindow>& windows);

/// Trains f_eta on success-flagged windows only. Throws std::invalid_argument
/// if the set is empty or contains a failure window.
RndPair train_rnd(const std::vector<LabeledWindow>& success_windows, WindowShape shape,
                  const NoiseSchedule& schedule, const RndConfig& config,
                  const TrainOptions& options, std::uint64_t target_seed,
                  RndTrainReport* report = nullptr);

/// Curiosity guidance g2 = -grad curiosity. Throws std::domain_error on
/// non-finite entries.
Matrix g2(const Matrix& windows, int step, const RndPair& pair);
RowMatrix g2(const TrajectoryWindow& window, int step, const RndPair& pair);

struct GuidanceConfig {
  double alpha = 0.1;
  double lambda = 0.0;
  bool enable_reward = true;
  bool enable_curiosity = true;

  /// Throws std::invalid_argument on negative alpha or lambda.
  void validate() const;
};

/// g1 [enable_reward] + lambda g2 [enable_curiosity]. Non-finite entries are
/// passed through so the sampler can skip that column. With both guides
/// disabled the result is zero and `warnings` is incremented.
Matrix combined_guidance(const Matrix& windows, int step, const ReturnPredictor* predictor,
                         const RndPair* pair, const GuidanceConfig& config, int* warnings = nullptr);

/// Binds guides and a config into a sampler callback. The referenced guides
/// must outlive the returned function.
GuidanceFn make_guidance(const ReturnPredictor* predictor, const RndPair* pair,
                         const GuidanceConfig& config);

}  // namespace trajdiff
