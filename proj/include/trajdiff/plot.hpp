#pragma once

#include "trajdiff/env.hpp"

#include <optional>
#include <string>
#include <vector>

namespace trajdiff {

/// Success rate against lambda with standard-error bars. Points are evenly
/// spaced (lambda lists usually mix 0 with a log grid). `baseline` draws a
/// red dotted horizontal line.
std::string svg_lambda_curve(const std::vector<double>& lambdas, const std::vector<double>& success,
                             const std::vector<double>& se, std::optional<double> baseline);

struct TrajectoryPanel {
  std::string title;
  std::vector<std::vector<Vec2>> paths;
  std::vector<bool> success;
};

/// Maze walls, start region and goal with rollout paths drawn on top, one
/// panel per entry.
std::string svg_trajectories(const MazeSpec& maze, const std::vector<TrajectoryPanel>& panels);

std::string svg_bars(const std::vector<std::string>& labels, const std::vector<double>& values,
                     const std::string& title, const std::string& y_label);

}  // namespace trajdiff
