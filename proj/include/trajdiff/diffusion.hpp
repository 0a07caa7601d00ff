#pragma once

#include "trajdiff/dataset.hpp"
#include "trajdiff/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace trajdiff {

/// Variance schedule indexed by diffusion step 0..N. Index 0 is the clean
/// data (alpha_bar = 1, beta = 0).
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  /// Sigma^i of the reverse step, beta_i (1 - abar_{i-1}) / (1 - abar_i).
  std::vector<double> posterior_variance;
  std::vector<double> posterior_coef_x0;
  std::vector<double> posterior_coef_xt;

  /// Cosine schedule with betas clipped to 0.999.
  static NoiseSchedule cosine(int steps, double offset = 0.008);
  /// `betas` lists beta_1..beta_N.
  static NoiseSchedule from_betas(const std::vector<double>& betas);

  void check_step(int i, int lowest = 1) const;
};

/// sqrt(abar_i) x0 + sqrt(1 - abar_i) eps, column by column.
Matrix forward_noise(const Matrix& clean, std::span<const int> steps, const Matrix& eps,
                     const NoiseSchedule& schedule);
/// Single window; step 0 is the identity.
TrajectoryWindow forward_noise(const TrajectoryWindow& window, int step, const RowMatrix& eps,
                               const NoiseSchedule& schedule);

/// Overwrites the leading state entries of every column with `states`.
void inpaint_first_state(Matrix& windows, const Matrix& states);

struct DenoiserConfig {
  int hidden_width = 512;
  int hidden_layers = 3;
  int embed_dim = 32;
};

/// Noise-prediction network eps_theta(tau^i, i). The output layer starts at
/// zero so the initial prediction is eps = 0.
class Denoiser {
 public:
  static constexpr const char* kTag = "denoiser";

  Denoiser() = default;
  Denoiser(WindowShape shape, DenoiserConfig config, std::uint64_t seed);

  const WindowShape& shape() const { return shape_; }
  const DenoiserConfig& config() const { return config_; }
  Matrix predict_noise(const Matrix& windows, std::span<const int> steps) const;

  StepConditionedNet& net() { return net_; }
  const StepConditionedNet& net() const { return net_; }

  Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const Checkpoint& ck);

 private:
  WindowShape shape_;
  DenoiserConfig config_;
  StepConditionedNet net_;
};

struct TrainOptions {
  int steps = 4000;
  int batch = 64;
  double lr = 2e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

/// Minimises ||eps - eps_theta(forward_noise(x0, i, eps), i)||^2 with i
/// uniform on 1..N. The first state of each noised window is kept clean,
/// matching the conditioning applied at sampling time, and excluded from
/// the loss. `loss_curve`, when given, receives the per-step batch loss.
/// Throws std::runtime_error on a non-finite loss.
Denoiser train_denoiser(const Matrix& windows, WindowShape shape, const NoiseSchedule& schedule,
                        const DenoiserConfig& config, const TrainOptions& options,
                        std::vector<double>* loss_curve = nullptr);

using NoisePredictor = std::function<Matrix(const Matrix& windows, std::span<const int> steps)>;
/// Gradient of the guide objective for every column of `mean`.
using GuidanceFn = std::function<Matrix(const Matrix& mean, int step)>;

NoisePredictor as_predictor(const Denoiser& model);

/// Mean of p(tau^{i-1} | tau^i) given the predicted noise.
Matrix posterior_mean(const Matrix& x_t, const Matrix& eps_pred, int step,
                      const NoiseSchedule& schedule, bool clip_denoised);

/// mean += alpha * Sigma^i * g for every column whose gradient is finite.
/// Columns with non-finite gradients are left as is and counted in `skips`.
void apply_guidance(Matrix& mean, int step, const GuidanceFn& guidance, double alpha,
                    const NoiseSchedule& schedule, std::vector<int>& skips);

struct SamplerOptions {
  double alpha = 0.0;
  bool clip_denoised = true;
};

struct SampleResult {
  Matrix windows;  // normalized, flattened, one column per sample
  std::vector<int> guidance_skips;
};

/// Ancestral sampling from i = N down to 1 with first-state inpainting.
/// `conditions` holds normalized start states (state_dim x batch); column j
/// draws its noise from a generator seeded with seeds[j], so results do
/// not depend on which other samples share the batch.
SampleResult sample_batch(const NoisePredictor& model, const NoiseSchedule& schedule,
                          WindowShape shape, const Matrix& conditions, const GuidanceFn* guidance,
                          const SamplerOptions& options, std::span<const std::uint64_t> seeds);

/// Samples one plan from a raw (unnormalized) current state and returns it
/// denormalized; its first state equals `current_state` exactly.
TrajectoryWindow sample(const Denoiser& model, const NoiseSchedule& schedule, const NormStats& stats,
                        const Vector& current_state, const GuidanceFn* guidance,
                        const SamplerOptions& options, std::uint64_t seed,
                        int* guidance_skips = nullptr);

}  // namespace trajdiff
