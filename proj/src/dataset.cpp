#include "trajdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajdiff {

TrajectoryWindow TrajectoryWindow::from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat,
                                             WindowShape shape, bool normalized) {
  if (flat.size() != shape.flat_size()) throw std::invalid_argument("from_flat: size mismatch");
  TrajectoryWindow w;
  w.values = Eigen::Map<const RowMatrix>(flat.data(), shape.horizon, shape.width());
  w.padded.assign(static_cast<std::size_t>(shape.horizon), 0);
  w.state_dim = shape.state_dim;
  w.normalized = normalized;
  return w;
}

std::vector<LabeledWindow> make_windows(const Episode& episode, int horizon, int stride,
                                        double discount, int episode_index) {
  if (horizon <= 0) throw std::invalid_argument("make_windows: horizon must be positive");
  if (stride <= 0) throw std::invalid_argument("make_windows: stride must be positive");
  if (discount <= 0 || discount > 1) throw std::invalid_argument("make_windows: discount must lie in (0, 1]");
  const int T = episode.length();
  if (T < 1) throw std::invalid_argument("make_windows: episode is empty");

  // Return-to-go over the whole remaining episode.
  std::vector<double> to_go(static_cast<std::size_t>(T) + 1, 0.0);
  for (int t = T - 1; t >= 0; --t)
    to_go[static_cast<std::size_t>(t)] =
        episode.rewards[static_cast<std::size_t>(t)] + discount * to_go[static_cast<std::size_t>(t) + 1];

  std::vector<int> starts;
  if (T < horizon) {
    starts.push_back(0);
  } else {
    for (int t = 0; t < T; t += stride) starts.push_back(t);
  }

  std::vector<LabeledWindow> out;
  out.reserve(starts.size());
  const Vec2& terminal = episode.states.back();
  for (int t0 : starts) {
    LabeledWindow lw;
    lw.episode = episode_index;
    lw.start_step = t0;
    lw.label = {to_go[static_cast<std::size_t>(t0)], episode.success};
    auto& w = lw.window;
    w.values.resize(horizon, kStateDim + kActionDim);
    w.padded.assign(static_cast<std::size_t>(horizon), 0);
    for (int k = 0; k < horizon; ++k) {
      const int t = t0 + k;
      if (t < T) {
        const auto& s = episode.states[static_cast<std::size_t>(t)];
        const auto& a = episode.actions[static_cast<std::size_t>(t)];
        w.values.row(k) << s.x(), s.y(), a.x(), a.y();
      } else {
        w.values.row(k) << terminal.x(), terminal.y(), 0.0, 0.0;
        w.padded[static_cast<std::size_t>(k)] = 1;
      }
    }
    out.push_back(std::move(lw));
  }
  return out;
}

std::vector<LabeledWindow> make_windows(const std::vector<Episode>& episodes, int horizon,
                                        int stride, double discount) {
  std::vector<LabeledWindow> out;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    auto w = make_windows(episodes[e], horizon, stride, discount, static_cast<int>(e));
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

NormStats::NormStats(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw std::invalid_argument("NormStats: min/max size mismatch");
  degenerate_.resize(min_.size());
  for (std::size_t c = 0; c < min_.size(); ++c) {
    if (!(max_[c] >= min_[c])) throw std::invalid_argument("NormStats: max < min");
    degenerate_[c] = max_[c] - min_[c] <= 0.0 ? 1 : 0;
  }
}

NormStats NormStats::from_episodes(const std::vector<Episode>& episodes) {
  return from_range(dataset_column_range(episodes));
}

double NormStats::normalize_value(int column, double v) const {
  const auto c = static_cast<std::size_t>(column);
  if (degenerate_[c]) return 0.0;
  const double z = 2.0 * (v - min_[c]) / (max_[c] - min_[c]) - 1.0;
  return std::clamp(z, -1.0, 1.0);
}

double NormStats::denormalize_value(int column, double v) const {
  const auto c = static_cast<std::size_t>(column);
  if (degenerate_[c]) return min_[c];
  return (v + 1.0) * 0.5 * (max_[c] - min_[c]) + min_[c];
}

TrajectoryWindow NormStats::normalize(const TrajectoryWindow& w) const {
  if (w.normalized) throw std::logic_error("normalize: window already normalized");
  if (w.values.cols() != columns()) throw std::invalid_argument("normalize: column count mismatch");
  TrajectoryWindow out = w;
  for (Eigen::Index r = 0; r < w.values.rows(); ++r)
    for (int c = 0; c < columns(); ++c) out.values(r, c) = normalize_value(c, w.values(r, c));
  out.normalized = true;
  return out;
}

TrajectoryWindow NormStats::denormalize(const TrajectoryWindow& w) const {
  if (!w.normalized) throw std::logic_error("denormalize: window is not normalized");
  if (w.values.cols() != columns()) throw std::invalid_argument("denormalize: column count mismatch");
  TrajectoryWindow out = w;
  for (Eigen::Index r = 0; r < w.values.rows(); ++r)
    for (int c = 0; c < columns(); ++c) out.values(r, c) = denormalize_value(c, w.values(r, c));
  out.normalized = false;
  return out;
}

Eigen::VectorXd NormStats::normalize_state(const Eigen::VectorXd& s) const {
  Eigen::VectorXd out(s.size());
  for (Eigen::Index c = 0; c < s.size(); ++c) out[c] = normalize_value(static_cast<int>(c), s[c]);
  return out;
}

Eigen::VectorXd NormStats::normalize_action(const Eigen::VectorXd& a, int state_dim) const {
  Eigen::VectorXd out(a.size());
  for (Eigen::Index c = 0; c < a.size(); ++c)
    out[c] = normalize_value(state_dim + static_cast<int>(c), a[c]);
  return out;
}

Eigen::VectorXd NormStats::denormalize_action(const Eigen::VectorXd& a, int state_dim) const {
  Eigen::VectorXd out(a.size());
  for (Eigen::Index c = 0; c < a.size(); ++c)
    out[c] = denormalize_value(state_dim + static_cast<int>(c), a[c]);
  return out;
}

Eigen::VectorXd NormStats::normalize_row(const Eigen::VectorXd& row) const {
  if (row.size() != columns()) throw std::invalid_argument("normalize_row: size mismatch");
  Eigen::VectorXd out(row.size());
  for (int c = 0; c < columns(); ++c) out[c] = normalize_value(c, row[c]);
  return out;
}

Eigen::MatrixXd stack_flat(const std::vector<LabeledWindow>& windows) {
  if (windows.empty()) return {};
  const auto n = windows.front().window.values.size();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(windows.size()));
  for (std::size_t j = 0; j < windows.size(); ++j) {
    if (windows[j].window.values.size() != n) throw std::invalid_argument("stack_flat: ragged windows");
    out.col(static_cast<Eigen::Index>(j)) = windows[j].window.flat();
  }
  return out;
}

}  // namespace trajdiff
