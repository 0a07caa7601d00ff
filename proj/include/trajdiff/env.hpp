#pragma once

#include <Eigen/Core>

#include "trajdiff/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace trajdiff {

using Vec2 = Eigen::Vector2d;

struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Grid maze over the unit square. Row 0 is the bottom row; cell (col, row)
/// covers [col, col + 1) x [row, row + 1) scaled by 1 / cols and 1 / rows.
struct MazeSpec {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> walls;  // row-major, 1 = wall
  Vec2 goal_center{0.9, 0.9};
  double goal_radius = 0.08;
  std::vector<Cell> start_cells;
  double action_max = 0.1;
  int episode_limit = 100;

  bool is_wall(Cell c) const;
  bool in_bounds(Cell c) const;
  Cell cell_of(const Vec2& p) const;
  Vec2 cell_center(Cell c) const;
  double cell_width() const { return 1.0 / cols; }
  double cell_height() const { return 1.0 / rows; }

  /// Stable 64-bit digest of every field; stored in dataset manifests.
  std::uint64_t hash() const;
  std::string describe() const;

  /// Throws std::invalid_argument when the goal sits in a wall or some
  /// start cell cannot reach the goal cell.
  void validate() const;
};

/// 5x5 grid with a U-shaped wall open to the left. Start region is the
/// bottom-left corner, goal the top-right cell; the pocket inside the U
/// lies on the straight line from start to goal.
MazeSpec default_umaze();
/// Looks up a maze by name ("umaze", "open"). Throws on unknown names.
MazeSpec maze_by_name(const std::string& name);

/// Shortest 4-connected cell path from `from` to `to`, inclusive. The order
/// in which neighbours are expanded is shuffled with `tie_seed` so equal
/// length routes are chosen uniformly. Empty when unreachable.
std::vector<Cell> shortest_cell_path(const MazeSpec& maze, Cell from, Cell to,
                                     std::uint64_t tie_seed);

/// Flood fill from `from`; true if `to` is reachable.
bool reachable(const MazeSpec& maze, Cell from, Cell to);

struct EnvState {
  Vec2 position{0.0, 0.0};
  int step_count = 0;
};

/// Action with components clamped to [-action_max, action_max].
class Action {
 public:
  Action(const Vec2& delta, double action_max);
  const Vec2& delta() const { return delta_; }

 private:
  Vec2 delta_;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

/// Point-mass maze dynamics. Stateless apart from the maze definition, so
/// `step` is a pure function of its arguments.
class MazeEnv {
 public:
  explicit MazeEnv(MazeSpec maze);

  const MazeSpec& maze() const { return maze_; }
  StepResult step(const EnvState& state, const Action& action) const;
  Action make_action(const Vec2& delta) const { return Action(delta, maze_.action_max); }
  bool at_goal(const Vec2& p) const;
  /// Uniform position inside a random start cell, kept 0.05 cells away
  /// from the cell border.
  EnvState sample_start(Rng& rng) const;

 private:
  Vec2 resolve_motion(const Vec2& from, const Vec2& delta) const;
  MazeSpec maze_;
};

/// T transitions: states[0..T], actions[0..T-1], rewards[0..T-1] where
/// rewards[t] is received after actions[t].
struct Episode {
  std::vector<Vec2> states;
  std::vector<Vec2> actions;
  std::vector<double> rewards;
  bool success = false;
  bool expert = false;

  int length() const { return static_cast<int>(actions.size()); }
};

struct DatasetParams {
  int episodes = 400;
  double expert_fraction = 0.6;
  double noise_sigma = 0.01;
  double expert_speed = 0.03;
  std::uint64_t seed = 0;
};

/// Expert episodes follow shortest-path waypoints with Gaussian action
/// noise; the rest are heading-persistent random walks. Deterministic in
/// `params.seed`.
std::vector<Episode> generate_dataset(const MazeSpec& maze, const DatasetParams& params);

Episode run_expert_episode(const MazeEnv& env, const EnvState& start, double speed,
                           double noise_sigma, std::uint64_t seed);
Episode run_random_walk(const MazeEnv& env, const EnvState& start, std::uint64_t seed);

/// Per-column extrema of the flattened (state, action) rows over a dataset.
struct ColumnRange {
  std::vector<double> min;
  std::vector<double> max;
};
ColumnRange dataset_column_range(const std::vector<Episode>& episodes);

// Dataset directory:
//   manifest.txt  key = value lines
//   episodes.bin  little-endian records, see README for the layout
struct DatasetManifest {
  int format_version = 1;
  int episode_count = 0;
  std::uint64_t maze_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  ColumnRange range;
};

void write_episodes(const std::filesystem::path& file, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& file);
void write_dataset_dir(const std::filesystem::path& dir, const DatasetManifest& manifest,
                       const std::vector<Episode>& episodes);
DatasetManifest read_manifest(const std::filesystem::path& dir);
std::pair<DatasetManifest, std::vector<Episode>> read_dataset_dir(const std::filesystem::path& dir);

}  // namespace trajdiff
