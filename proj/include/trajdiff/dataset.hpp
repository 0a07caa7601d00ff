#pragma once

#include "trajdiff/env.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace trajdiff {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kStateDim = 2;
inline constexpr int kActionDim = 2;

struct WindowShape {
  int horizon = 32;
  int state_dim = kStateDim;
  int action_dim = kActionDim;

  int width() const { return state_dim + action_dim; }
  int flat_size() const { return horizon * width(); }
};

/// H rows of (state, action). Row-major storage, so `values.data()` is the
/// flattened window the networks consume.
struct TrajectoryWindow {
  RowMatrix values;
  std::vector<std::uint8_t> padded;  // 1 for rows past the episode end
  int state_dim = kStateDim;
  bool normalized = false;

  int horizon() const { return static_cast<int>(values.rows()); }
  WindowShape shape() const {
    return {horizon(), state_dim, static_cast<int>(values.cols()) - state_dim};
  }
  Eigen::Map<const Eigen::VectorXd> flat() const {
    return {values.data(), values.size()};
  }
  static TrajectoryWindow from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, WindowShape shape,
                                    bool normalized);
};

struct WindowLabel {
  double discounted_return = 0.0;
  bool success = false;
};

struct LabeledWindow {
  TrajectoryWindow window;
  WindowLabel label;
  int episode = 0;
  int start_step = 0;
};

/// Sliding windows over one episode. Episodes of length T >= H yield
/// unpadded windows starting at 0, stride, ..., T - H followed by padded
/// tail windows up to start T - 1; shorter episodes yield one padded window.
/// Padding repeats the terminal state with zero action.
std::vector<LabeledWindow> make_windows(const Episode& episode, int horizon, int stride,
                                        double discount, int episode_index = 0);

std::vector<LabeledWindow> make_windows(const std::vector<Episode>& episodes, int horizon,
                                        int stride, double discount);

/// Per-column affine map onto [-1, 1].
class NormStats {
 public:
  NormStats() = default;
  NormStats(std::vector<double> min, std::vector<double> max);
  static NormStats from_episodes(const std::vector<Episode>& episodes);
  static NormStats from_range(const ColumnRange& range) { return NormStats(range.min, range.max); }

  int columns() const { return static_cast<int>(min_.size()); }
  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }
  /// Columns whose range is zero; they normalize to 0.
  const std::vector<std::uint8_t>& degenerate() const { return degenerate_; }

  double normalize_value(int column, double v) const;
  double denormalize_value(int column, double v) const;

  /// Output is clamped to [-1, 1].
  TrajectoryWindow normalize(const TrajectoryWindow& w) const;
  TrajectoryWindow denormalize(const TrajectoryWindow& w) const;
  Eigen::VectorXd normalize_state(const Eigen::VectorXd& s) const;
  Eigen::VectorXd normalize_action(const Eigen::VectorXd& a, int state_dim) const;
  Eigen::VectorXd denormalize_action(const Eigen::VectorXd& a, int state_dim) const;
  /// Normalizes one concatenated (state, action) row.
  Eigen::VectorXd normalize_row(const Eigen::VectorXd& row) const;

  ColumnRange range() const { return {min_, max_}; }

 private:
  std::vector<double> min_;
  std::vector<double> max_;
  std::vector<std::uint8_t> degenerate_;
};

/// Stacks flattened windows as columns: (H * width) x count.
Eigen::MatrixXd stack_flat(const std::vector<LabeledWindow>& windows);

}  // namespace trajdiff
