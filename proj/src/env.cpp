#include "trajdiff/env.hpp"

#include "trajdiff/binary_io.hpp"
#include "trajdiff/keyvalue.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace trajdiff {

namespace {

constexpr double kWallMargin = 1e-9;
constexpr std::uint32_t kEpisodeMagic = 0x50454454;  // "TDEP"
constexpr std::uint32_t kEpisodeVersion = 1;
constexpr int kMaxStartRetries = 64;

}  // namespace

bool MazeSpec::in_bounds(Cell c) const {
  return c.col >= 0 && c.col < cols && c.row >= 0 && c.row < rows;
}

bool MazeSpec::is_wall(Cell c) const {
  if (!in_bounds(c)) return true;
  return walls[static_cast<std::size_t>(c.row * cols + c.col)] != 0;
}

Cell MazeSpec::cell_of(const Vec2& p) const {
  const int col = std::clamp(static_cast<int>(std::floor(p.x() * cols)), 0, cols - 1);
  const int row = std::clamp(static_cast<int>(std::floor(p.y() * rows)), 0, rows - 1);
  return {col, row};
}

Vec2 MazeSpec::cell_center(Cell c) const {
  return {(c.col + 0.5) * cell_width(), (c.row + 0.5) * cell_height()};
}

std::string MazeSpec::describe() const {
  std::ostringstream os;
  os << "rows=" << rows << ";cols=" << cols << ";walls=";
  for (auto w : walls) os << (w ? '#' : '.');
  os << ";goal=" << format_double(goal_center.x()) << "," << format_double(goal_center.y())
     << ";radius=" << format_double(goal_radius) << ";starts=";
  for (const auto& c : start_cells) os << c.col << ":" << c.row << " ";
  os << ";amax=" << format_double(action_max) << ";limit=" << episode_limit;
  return os.str();
}

std::uint64_t MazeSpec::hash() const {
  const auto text = describe();
  return fnv1a(text.data(), text.size());
}

void MazeSpec::validate() const {
  if (rows <= 0 || cols <= 0 || walls.size() != static_cast<std::size_t>(rows * cols))
    throw std::invalid_argument("maze grid shape is inconsistent");
  if (action_max <= 0 || action_max >= std::min(cell_width(), cell_height()))
    throw std::invalid_argument("action_max must be positive and smaller than a cell");
  if (goal_center.x() < 0 || goal_center.x() > 1 || goal_center.y() < 0 || goal_center.y() > 1)
    throw std::invalid_argument("goal center outside the unit square");
  const Cell goal = cell_of(goal_center);
  if (is_wall(goal)) throw std::invalid_argument("goal center lies in a wall cell");
  if (start_cells.empty()) throw std::invalid_argument("maze has no start cells");
  for (const auto& s : start_cells) {
    if (is_wall(s)) throw std::invalid_argument("start cell is a wall");
    if (!reachable(*this, s, goal))
      throw std::invalid_argument("goal unreachable from start cell " + std::to_string(s.col) +
                                  "," + std::to_string(s.row));
  }
}

MazeSpec default_umaze() {
  // Rows listed top to bottom for readability.
  static constexpr std::array<const char*, 5> kLayout = {
      ".....",
      ".###.",
      "...#.",
      ".###.",
      ".....",
  };
  MazeSpec m;
  m.rows = 5;
  m.cols = 5;
  m.walls.assign(25, 0);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) m.walls[static_cast<std::size_t>(r * 5 + c)] = kLayout[4 - r][c] == '#';
  m.goal_center = {0.9, 0.9};
  m.goal_radius = 0.08;
  m.start_cells = {{0, 0}, {1, 0}, {0, 1}};
  m.action_max = 0.1;
  m.episode_limit = 100;
  return m;
}

MazeSpec maze_by_name(const std::string& name) {
  if (name == "umaze") return default_umaze();
  if (name == "open") {
    MazeSpec m = default_umaze();
    std::fill(m.walls.begin(), m.walls.end(), 0);
    return m;
  }
  throw std::invalid_argument("unknown maze: " + name);
}

std::vector<Cell> shortest_cell_path(const MazeSpec& maze, Cell from, Cell to,
                                     std::uint64_t tie_seed) {
  if (maze.is_wall(from) || maze.is_wall(to)) return {};
  const int n = maze.rows * maze.cols;
  auto index = [&](Cell c) { return c.row * maze.cols + c.col; };

  // BFS from the goal gives distances; walking downhill from `from` with a
  // random choice among equally short neighbours samples shortest routes.
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::queue<Cell> frontier;
  dist[static_cast<std::size_t>(index(to))] = 0;
  frontier.push(to);
  static constexpr std::array<Cell, 4> kMoves = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    for (const auto& m : kMoves) {
      const Cell nb{c.col + m.col, c.row + m.row};
      if (maze.is_wall(nb) || dist[static_cast<std::size_t>(index(nb))] >= 0) continue;
      dist[static_cast<std::size_t>(index(nb))] = dist[static_cast<std::size_t>(index(c))] + 1;
      frontier.push(nb);
    }
  }
  if (dist[static_cast<std::size_t>(index(from))] < 0) return {};

  Rng rng(tie_seed);
  std::vector<Cell> path{from};
  Cell cur = from;
  while (!(cur == to)) {
    std::vector<Cell> options;
    for (const auto& m : kMoves) {
      const Cell nb{cur.col + m.col, cur.row + m.row};
      if (maze.is_wall(nb)) continue;
      if (dist[static_cast<std::size_t>(index(nb))] == dist[static_cast<std::size_t>(index(cur))] - 1)
        options.push_back(nb);
    }
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    cur = options[pick(rng)];
    path.push_back(cur);
  }
  return path;
}

bool reachable(const MazeSpec& maze, Cell from, Cell to) {
  return !shortest_cell_path(maze, from, to, 0).empty();
}

Action::Action(const Vec2& delta, double action_max)
    : delta_(delta.cwiseMax(-action_max).cwiseMin(action_max)) {
  if (!delta_.allFinite()) delta_.setZero();
}

MazeEnv::MazeEnv(MazeSpec maze) : maze_(std::move(maze)) { maze_.validate(); }

bool MazeEnv::at_goal(const Vec2& p) const {
  return (p - maze_.goal_center).norm() <= maze_.goal_radius;
}

Vec2 MazeEnv::resolve_motion(const Vec2& from, const Vec2& delta) const {
  // Axis-separable: move along x, push back out of any wall, then y.
  Vec2 p = from;
  for (int axis = 0; axis < 2; ++axis) {
    const double extent = axis == 0 ? maze_.cell_width() : maze_.cell_height();
    double next = std::clamp(p[axis] + delta[axis], 0.0, 1.0 - kWallMargin);
    Vec2 probe = p;
    probe[axis] = next;
    const Cell c = maze_.cell_of(probe);
    if (maze_.is_wall(c)) {
      const int idx = axis == 0 ? c.col : c.row;
      next = delta[axis] > 0 ? idx * extent - kWallMargin : (idx + 1) * extent + kWallMargin;
    }
    p[axis] = next;
  }
  return p;
}

StepResult MazeEnv::step(const EnvState& state, const Action& action) const {
  StepResult out;
  out.state.position = resolve_motion(state.position, action.delta());
  out.state.step_count = state.step_count + 1;
  out.reward = at_goal(out.state.position) ? 1.0 : 0.0;
  out.done = out.reward > 0.0 || out.state.step_count >= maze_.episode_limit;
  return out;
}

EnvState MazeEnv::sample_start(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, maze_.start_cells.size() - 1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const Cell c = maze_.start_cells[pick(rng)];
  EnvState s;
  s.position = {(c.col + u(rng)) * maze_.cell_width(), (c.row + u(rng)) * maze_.cell_height()};
  return s;
}

namespace {

void record_step(Episode& ep, const Vec2& action, const StepResult& r) {
  ep.actions.push_back(action);
  ep.rewards.push_back(r.reward);
  ep.states.push_back(r.state.position);
  if (r.reward > 0.0) ep.success = true;
}

}  // namespace

Episode run_expert_episode(const MazeEnv& env, const EnvState& start, double speed,
                           double noise_sigma, std::uint64_t seed) {
  const auto& maze = env.maze();
  Rng rng(seed);
  const auto path = shortest_cell_path(maze, maze.cell_of(start.position),
                                       maze.cell_of(maze.goal_center), rng());
  if (path.empty()) throw std::runtime_error("expert: goal unreachable from start");

  std::vector<Vec2> waypoints;
  for (std::size_t k = 1; k + 1 < path.size(); ++k) waypoints.push_back(maze.cell_center(path[k]));
  waypoints.push_back(maze.goal_center);

  std::normal_distribution<double> noise(0.0, 1.0);
  Episode ep;
  ep.expert = true;
  ep.states.push_back(start.position);
  EnvState state = start;
  std::size_t target = 0;
  for (;;) {
    // Advance once the current waypoint is within one step.
    while (target + 1 < waypoints.size() && (waypoints[target] - state.position).norm() < speed)
      ++target;
    Vec2 to_target = waypoints[target] - state.position;
    const double dist = to_target.norm();
    Vec2 delta = dist > 0 ? Vec2(to_target * (std::min(speed, dist) / dist)) : Vec2::Zero();
    if (noise_sigma > 0) delta += noise_sigma * Vec2(noise(rng), noise(rng));
    const Action a = env.make_action(delta);
    const auto r = env.step(state, a);
    record_step(ep, a.delta(), r);
    state = r.state;
    if (r.done) break;
  }
  return ep;
}

Episode run_random_walk(const MazeEnv& env, const EnvState& start, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> speed_frac(0.3, 1.0);
  std::normal_distribution<double> turn(0.0, 1.2);
  const double amax = env.maze().action_max;

  Episode ep;
  ep.states.push_back(start.position);
  EnvState state = start;
  double heading = angle(rng);
  for (;;) {
    heading += turn(rng);
    const double speed = speed_frac(rng) * amax;
    const Action a = env.make_action(Vec2(std::cos(heading), std::sin(heading)) * speed);
    const auto r = env.step(state, a);
    // Bumping into a wall picks a fresh heading.
    if ((r.state.position - state.position - a.delta()).norm() > 1e-12) heading = angle(rng);
    record_step(ep, a.delta(), r);
    state = r.state;
    if (r.done) break;
  }
  return ep;
}

std::vector<Episode> generate_dataset(const MazeSpec& maze, const DatasetParams& params) {
  if (params.episodes < 1) throw std::invalid_argument("generate_dataset: n_episodes must be >= 1");
  if (params.expert_fraction < 0 || params.expert_fraction > 1)
    throw std::invalid_argument("generate_dataset: expert_fraction must lie in [0, 1]");
  const MazeEnv env(maze);
  const Cell goal = maze.cell_of(maze.goal_center);
  const int n_expert = static_cast<int>(std::lround(params.expert_fraction * params.episodes));

  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(params.episodes));
  for (int e = 0; e < params.episodes; ++e) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(e)));
    EnvState start;
    int tries = 0;
    do {
      if (++tries > kMaxStartRetries)
        throw std::runtime_error("generate_dataset: no start with a reachable goal after " +
                                 std::to_string(kMaxStartRetries) + " retries");
      start = env.sample_start(rng);
    } while (!reachable(maze, maze.cell_of(start.position), goal));
    const auto episode_seed = rng();
    out.push_back(e < n_expert ? run_expert_episode(env, start, params.expert_speed,
                                                    params.noise_sigma, episode_seed)
                               : run_random_walk(env, start, episode_seed));
  }
  return out;
}

ColumnRange dataset_column_range(const std::vector<Episode>& episodes) {
  ColumnRange r;
  r.min.assign(4, std::numeric_limits<double>::infinity());
  r.max.assign(4, -std::numeric_limits<double>::infinity());
  auto update = [&](int col, double v) {
    r.min[static_cast<std::size_t>(col)] = std::min(r.min[static_cast<std::size_t>(col)], v);
    r.max[static_cast<std::size_t>(col)] = std::max(r.max[static_cast<std::size_t>(col)], v);
  };
  for (const auto& ep : episodes) {
    for (const auto& s : ep.states) {
      update(0, s.x());
      update(1, s.y());
    }
    for (const auto& a : ep.actions) {
      update(2, a.x());
      update(3, a.y());
    }
  }
  return r;
}

void write_episodes(const std::filesystem::path& file, const std::vector<Episode>& episodes) {
  ByteWriter w;
  w.put<std::uint32_t>(kEpisodeMagic);
  w.put<std::uint32_t>(kEpisodeVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(episodes.size()));
  for (const auto& ep : episodes) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ep.length()));
    w.put<std::uint8_t>(ep.success ? 1 : 0);
    w.put<std::uint8_t>(ep.expert ? 1 : 0);
    for (const auto& s : ep.states) {
      w.put(s.x());
      w.put(s.y());
    }
    for (const auto& a : ep.actions) {
      w.put(a.x());
      w.put(a.y());
    }
    for (double r : ep.rewards) w.put(r);
  }
  w.save(file);
}

std::vector<Episode> read_episodes(const std::filesystem::path& file) {
  auto r = ByteReader::load(file);
  if (r.get<std::uint32_t>() != kEpisodeMagic) throw std::runtime_error("not an episode file: " + file.string());
  if (r.get<std::uint32_t>() != kEpisodeVersion)
    throw std::runtime_error("unsupported episode file version: " + file.string());
  const auto count = r.get<std::uint32_t>();
  std::vector<Episode> out(count);
  for (auto& ep : out) {
    const auto len = r.get<std::uint32_t>();
    ep.success = r.get<std::uint8_t>() != 0;
    ep.expert = r.get<std::uint8_t>() != 0;
    ep.states.resize(len + 1);
    ep.actions.resize(len);
    ep.rewards.resize(len);
    for (auto& s : ep.states) {
      s.x() = r.get<double>();
      s.y() = r.get<double>();
    }
    for (auto& a : ep.actions) {
      a.x() = r.get<double>();
      a.y() = r.get<double>();
    }
    for (auto& v : ep.rewards) v = r.get<double>();
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in episode file: " + file.string());
  return out;
}

void write_dataset_dir(const std::filesystem::path& dir, const DatasetManifest& manifest,
                       const std::vector<Episode>& episodes) {
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv.set("format_version", manifest.format_version);
  kv.set("episode_count", static_cast<int>(episodes.size()));
  kv.set("maze_hash", hex64(manifest.maze_hash));
  kv.set("seed", static_cast<unsigned long long>(manifest.seed));
  kv.set("config_hash", hex64(manifest.config_hash));
  kv.set_doubles("column_min", manifest.range.min);
  kv.set_doubles("column_max", manifest.range.max);
  kv.save(dir / "manifest.txt");
  write_episodes(dir / "episodes.bin", episodes);
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto kv = KeyValues::load(dir / "manifest.txt");
  DatasetManifest m;
  m.format_version = static_cast<int>(kv.get_int("format_version"));
  m.episode_count = static_cast<int>(kv.get_int("episode_count"));
  m.maze_hash = std::stoull(kv.get("maze_hash"), nullptr, 16);
  m.seed = kv.get_uint("seed");
  m.config_hash = std::stoull(kv.get("config_hash"), nullptr, 16);
  m.range.min = kv.get_doubles("column_min");
  m.range.max = kv.get_doubles("column_max");
  return m;
}

std::pair<DatasetManifest, std::vector<Episode>> read_dataset_dir(const std::filesystem::path& dir) {
  auto manifest = read_manifest(dir);
  auto episodes = read_episodes(dir / "episodes.bin");
  if (static_cast<int>(episodes.size()) != manifest.episode_count)
    throw std::runtime_error("manifest episode_count does not match episodes.bin in " + dir.string());
  return {std::move(manifest), std::move(episodes)};
}

}  // namespace trajdiff
