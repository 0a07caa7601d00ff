#pragma once

#include "trajdiff/diffusion.hpp"

#include <cstdint>
#include <vector>

namespace trajdiff {

struct GuideNetConfig {
  int hidden_width = 256;
  int hidden_layers = 3;
  int embed_dim = 32;
};

/// J_phi(tau^i, i): discounted return regressed from noised windows. The
/// output is in standardized units (training labels scaled to zero mean,
/// unit variance).
class ReturnPredictor {
 public:
  static constexpr const char* kTag = "return";

  ReturnPredictor() = default;
  ReturnPredictor(WindowShape shape, GuideNetConfig config, std::uint64_t seed);

  const WindowShape& shape() const { return shape_; }
  double label_mean() const { return label_mean_; }
  double label_scale() const { return label_scale_; }
  void set_label_stats(double mean, double scale);

  /// Standardized prediction for every column.
  Vector predict(const Matrix& windows, std::span<const int> steps) const;
  /// Prediction mapped back to return units.
  Vector predict_return(const Matrix& windows, std::span<const int> steps) const;
  /// dJ/dtau for every column, evaluated at diffusion step `step`.
  Matrix gradient(const Matrix& windows, int step) const;

  StepConditionedNet& net() { return net_; }
  const StepConditionedNet& net() const { return net_; }

  Checkpoint to_checkpoint() const;
  static ReturnPredictor from_checkpoint(const Checkpoint& ck);

 private:
  WindowShape shape_;
  GuideNetConfig config_;
  StepConditionedNet net_;
  double label_mean_ = 0.0;
  double label_scale_ = 1.0;
};

struct ReturnTrainReport {
  std::vector<double> loss_curve;
  bool degenerate_labels = false;
};

/// Regresses standardized labels from (forward_noise(x0, i, eps), i) with
/// the first state kept clean. Labels with zero variance are flagged in
/// `report` and the predictor is trained towards 0.
ReturnPredictor train_return(const Matrix& windows, const std::vector<double>& returns,
                             WindowShape shape, const NoiseSchedule& schedule,
                             const GuideNetConfig& config, const TrainOptions& options,
                             ReturnTrainReport* report = nullptr);

/// Reward guidance g1: exact gradient of J_phi at step i, shaped like the
/// input. Throws std::domain_error when any entry is non-finite.
Matrix g1(const Matrix& windows, int step, const ReturnPredictor& predictor);
RowMatrix g1(const TrajectoryWindow& window, int step, const ReturnPredictor& predictor);

}  // namespace trajdiff
