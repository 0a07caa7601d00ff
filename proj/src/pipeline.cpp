#include "trajdiff/pipeline.hpp"

#include "trajdiff/plot.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace trajdiff {

namespace fs = std::filesystem;

namespace {

class NullBuffer : public std::streambuf {
 public:
  int overflow(int c) override { return c; }
};

std::ostream& null_stream() {
  static NullBuffer buf;
  static std::ostream s(&buf);
  return s;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double tail_mean(const std::vector<double>& curve) {
  if (curve.empty()) return 0.0;
  const std::size_t from = curve.size() - std::max<std::size_t>(1, curve.size() / 10);
  double s = 0.0;
  for (std::size_t i = from; i < curve.size(); ++i) s += curve[i];
  return s / static_cast<double>(curve.size() - from);
}

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

void write_loss_curve(const fs::path& file, const std::vector<double>& curve) {
  std::string s = "step,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) s += std::to_string(i + 1) + "," + format_double(curve[i]) + "\n";
  write_text(file, s);
}

std::string lambda_dir(double lambda) { return "lambda_" + format_double(lambda); }

void require_file(const fs::path& file, const std::string& what, const std::string& stage) {
  if (!fs::exists(file))
    throw StageError("missing " + what + " (" + file.string() + "); run `trajdiff " + stage + "` first");
}

void check_hash(const std::string& recorded, std::uint64_t expected, const std::string& what,
                const std::string& stage) {
  if (recorded != hex64(expected))
    throw StageError(what + " was produced with a different config (hash " + recorded + ", current " +
                     hex64(expected) + "); re-run `trajdiff " + stage + "`");
}

Checkpoint load_checked(const fs::path& file, const std::string& tag, std::uint64_t expected,
                        const std::string& what, const std::string& stage) {
  require_file(file, what, stage);
  auto ck = Checkpoint::load(file, tag);
  check_hash(ck.has_meta("config_hash") ? ck.meta("config_hash") : "none", expected, what, stage);
  return ck;
}

struct TrainingSet {
  std::vector<LabeledWindow> windows;
  Matrix flat;
};

TrainingSet make_training_set(const std::vector<Episode>& episodes, const ExperimentConfig& c,
                              const NormStats& stats) {
  TrainingSet t;
  t.windows = make_windows(episodes, c.horizon, c.stride, c.discount);
  for (auto& w : t.windows) w.window = stats.normalize(w.window);
  t.flat = stack_flat(t.windows);
  return t;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw StageError("cannot read " + file.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<StateActionPair> episode_pairs(const std::vector<Episode>& episodes, const NormStats& stats) {
  std::vector<StateActionPair> pairs;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    for (int t = 0; t < ep.length(); ++t) {
      Vector row(4);
      row << ep.states[static_cast<std::size_t>(t)], ep.actions[static_cast<std::size_t>(t)];
      const Vector n = stats.normalize_row(row);
      pairs.push_back({n.head(2), n.tail(2), static_cast<int>(e), t});
    }
  }
  return pairs;
}

Pipeline::Pipeline(ExperimentConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {
  config_.validate();
}

std::ostream& Pipeline::log() const { return log_ ? *log_ : null_stream(); }

void Pipeline::write_config() const {
  fs::create_directories(paths().root);
  config_.save(paths().config());
}

void Pipeline::gen_data() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto maze = config_.maze_spec();
  const auto episodes = generate_dataset(maze, config_.dataset_params());
  DatasetManifest m;
  m.episode_count = static_cast<int>(episodes.size());
  m.maze_hash = maze.hash();
  m.seed = config_.data_seed();
  m.config_hash = config_.data_hash();
  m.range = dataset_column_range(episodes);
  write_config();
  write_dataset_dir(paths().data(), m, episodes);
  int successes = 0, experts = 0;
  for (const auto& e : episodes) {
    successes += e.success;
    experts += e.expert;
  }
  log() << "gen-data: " << episodes.size() << " episodes (" << experts << " expert, " << successes
        << " successful) in " << elapsed(t0) << " s\n";
}

std::vector<Episode> Pipeline::load_episodes() const {
  require_file(paths().data() / "manifest.txt", "dataset", "gen-data");
  auto [manifest, episodes] = read_dataset_dir(paths().data());
  check_hash(hex64(manifest.config_hash), config_.data_hash(), "dataset", "gen-data");
  return std::move(episodes);
}

NormStats Pipeline::norm_stats() const {
  require_file(paths().data() / "manifest.txt", "dataset", "gen-data");
  const auto manifest = read_manifest(paths().data());
  check_hash(hex64(manifest.config_hash), config_.data_hash(), "dataset", "gen-data");
  return NormStats::from_range(manifest.range);
}

TrainSummary Pipeline::train_diffusion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto episodes = load_episodes();
  const auto stats = norm_stats();
  const auto set = make_training_set(episodes, config_, stats);
  auto options = config_.train_diffusion;
  options.seed = config_.diffusion_seed();
  std::vector<double> curve;
  const auto model = train_denoiser(set.flat, config_.window_shape(), config_.schedule(), config_.denoiser,
                                    options, &curve);
  auto ck = model.to_checkpoint();
  ck.set_meta("config_hash", hex64(config_.diffusion_hash()));
  write_config();
  fs::create_directories(paths().checkpoints());
  ck.save(paths().denoiser());
  write_loss_curve(paths().checkpoints() / "denoiser_loss.csv", curve);
  TrainSummary s{options.steps, tail_mean(curve), elapsed(t0)};
  log() << "train-diffusion: " << set.windows.size() << " windows, " << s.steps << " steps, final loss "
        << s.final_loss << " in " << s.seconds << " s\n";
  return s;
}

TrainSummary Pipeline::train_reward() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto episodes = load_episodes();
  const auto stats = norm_stats();
  const auto set = make_training_set(episodes, config_, stats);
  std::vector<double> returns;
  returns.reserve(set.windows.size());
  for (const auto& w : set.windows) returns.push_back(w.label.discounted_return);
  auto options = config_.train_reward;
  options.seed = config_.reward_seed();
  ReturnTrainReport report;
  const auto model = train_return(set.flat, returns, config_.window_shape(), config_.schedule(),
                                  config_.reward_net, options, &report);
  auto ck = model.to_checkpoint();
  ck.set_meta("config_hash", hex64(config_.reward_hash()));
  write_config();
  fs::create_directories(paths().checkpoints());
  ck.save(paths().reward());
  write_loss_curve(paths().checkpoints() / "return_loss.csv", report.loss_curve);
  TrainSummary s{options.steps, tail_mean(report.loss_curve), elapsed(t0)};
  log() << "train-reward: " << s.steps << " steps, final loss " << s.final_loss << " in " << s.seconds << " s\n";
  return s;
}

TrainSummary Pipeline::train_rnd() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto episodes = load_episodes();
  const auto stats = norm_stats();
  const auto set = make_training_set(episodes, config_, stats);
  const auto success = select_success_windows(set.windows);
  auto options = config_.train_rnd;
  options.seed = config_.rnd_seed();
  RndTrainReport report;
  const auto pair = trajdiff::train_rnd(success, config_.window_shape(), config_.schedule(), config_.rnd,
                                        options, config_.rnd_target_seed(), &report);
  if (report.target_checksum_before != report.target_checksum_after)
    throw std::logic_error("train-rnd: target network changed during training");
  auto ck = pair.to_checkpoint();
  ck.set_meta("config_hash", hex64(config_.rnd_hash()));
  write_config();
  fs::create_directories(paths().checkpoints());
  ck.save(paths().rnd());
  write_loss_curve(paths().checkpoints() / "rnd_loss.csv", report.loss_curve);
  TrainSummary s{options.steps, tail_mean(report.loss_curve), elapsed(t0)};
  log() << "train-rnd: " << success.size() << " success windows, " << s.steps << " steps, final loss "
        << s.final_loss << " in " << s.seconds << " s\n";
  return s;
}

Denoiser Pipeline::load_denoiser() const {
  return Denoiser::from_checkpoint(
      load_checked(paths().denoiser(), Denoiser::kTag, config_.diffusion_hash(), "denoiser checkpoint", "train-diffusion"));
}

ReturnPredictor Pipeline::load_reward() const {
  return ReturnPredictor::from_checkpoint(
      load_checked(paths().reward(), ReturnPredictor::kTag, config_.reward_hash(), "return predictor checkpoint", "train-reward"));
}

RndPair Pipeline::load_rnd() const {
  auto pair = RndPair::from_checkpoint(
      load_checked(paths().rnd(), RndPair::kTag, config_.rnd_hash(), "RND checkpoint", "train-rnd"));
  pair.set_normalize_per_step(config_.rnd.normalize_per_step);
  return pair;
}

RolloutSummary Pipeline::run_rollouts(const fs::path& dir, const std::string& name, double lambda,
                                      const std::vector<std::uint64_t>& group_seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = norm_stats();
  const auto denoiser = load_denoiser();
  std::optional<ReturnPredictor> reward;
  std::optional<RndPair> pair;
  if (config_.guidance.enable_reward) reward = load_reward();
  if (config_.guidance.enable_curiosity) pair = load_rnd();
  const auto schedule = config_.schedule();
  auto pc = config_.planner_config();
  pc.guidance.lambda = lambda;
  Planner planner(MazeEnv(config_.maze_spec()), as_predictor(denoiser), config_.window_shape(), schedule, stats,
                  reward ? &*reward : nullptr, pair ? &*pair : nullptr, pc);

  RolloutSummary out;
  out.name = name;
  out.lambda = lambda;
  out.eval = evaluate(planner, config_.eval_episodes, group_seeds, &out.records);

  std::vector<Episode> episodes;
  std::string csv = "group,episode,seed,success,steps,final_x,final_y,mean_plan_curiosity,guidance_skips,failure\n";
  for (std::size_t g = 0; g < out.records.size(); ++g)
    for (std::size_t e = 0; e < out.records[g].size(); ++e) {
      const auto& r = out.records[g][e];
      episodes.push_back(r.to_episode());
      double cur = 0.0;
      int skips = 0;
      for (const auto& rp : r.replans) {
        cur += rp.plan_curiosity;
        skips += rp.guidance_skips;
        if (!rp.first_state_matches) ++out.first_state_mismatches;
      }
      if (!r.replans.empty()) cur /= static_cast<double>(r.replans.size());
      csv += std::to_string(g) + "," + std::to_string(e) + "," + std::to_string(r.seed) + "," +
             (r.success ? "1" : "0") + "," + std::to_string(r.length()) + "," + format_double(r.final_state.x()) +
             "," + format_double(r.final_state.y()) + "," + format_double(cur) + "," + std::to_string(skips) + "," +
             (r.failure.empty() ? "" : "\"" + r.failure + "\"") + "\n";
    }

  KeyValues m;
  m.set("name", name);
  m.set("lambda", lambda);
  m.set("alpha", pc.guidance.alpha);
  m.set("enable_reward", pc.guidance.enable_reward);
  m.set("enable_curiosity", pc.guidance.enable_curiosity);
  m.set("normalize_per_step", config_.rnd.normalize_per_step);
  m.set("episodes_per_group", config_.eval_episodes);
  m.set("groups", static_cast<int>(group_seeds.size()));
  m.set("episodes", out.eval.episodes);
  m.set("success_rate", out.eval.success_rate);
  m.set("success_se", out.eval.success_se);
  m.set_doubles("group_success", out.eval.group_success);
  m.set("mean_steps_to_goal", out.eval.mean_steps_to_goal);
  m.set("mean_plan_curiosity", out.eval.mean_plan_curiosity);
  m.set("guidance_skips", out.eval.guidance_skips);
  m.set("sampler_failures", out.eval.sampler_failures);
  m.set("first_state_mismatches", out.first_state_mismatches);
  m.set("diffusion_hash", hex64(config_.diffusion_hash()));

  fs::create_directories(dir);
  write_episodes(dir / "episodes.bin", episodes);
  write_text(dir / "episodes.csv", csv);
  m.save(dir / "metrics.txt");
  log() << name << ": lambda " << format_double(lambda) << " success " << out.eval.success_rate << " (se "
        << out.eval.success_se << ") over " << out.eval.episodes << " episodes in " << elapsed(t0) << " s\n";
  return out;
}

RolloutSummary Pipeline::rollout(const std::string& name) {
  write_config();
  return run_rollouts(paths().rollouts() / name, name, config_.guidance.lambda, config_.eval_group_seeds());
}

KSimIndex Pipeline::build_ksim_index() const {
  auto params = config_.ksim;
  params.seed = config_.ksim_seed();
  return KSimIndex::build(episode_pairs(load_episodes(), norm_stats()), params);
}

KSimReport Pipeline::score_rollouts(const fs::path& rollout_dir, const fs::path& report_stem,
                                    const KSimIndex& index) const {
  require_file(rollout_dir / "episodes.bin", "rollout records", "rollout");
  const auto episodes = read_episodes(rollout_dir / "episodes.bin");
  const auto stats = norm_stats();
  KSimReport r;
  r.name = report_stem.filename().string();
  std::string csv = "episode,steps,ksim\n";
  double total = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto pairs = episode_pairs({episodes[e]}, stats);
    if (pairs.empty()) continue;
    const auto s = ksim_score(pairs, index);
    r.episode_scores.push_back(s.value);
    total += s.value * s.n;
    r.pairs += s.n;
    csv += std::to_string(e) + "," + std::to_string(s.n) + "," + format_double(s.value) + "\n";
  }
  if (r.pairs == 0) throw StageError("no rollout steps to score in " + rollout_dir.string());
  r.score = total / r.pairs;
  csv += "all," + std::to_string(r.pairs) + "," + format_double(r.score) + "\n";
  write_text(fs::path(report_stem.string() + ".csv"), csv);
  KeyValues kv;
  kv.set("score", r.score);
  kv.set("pairs", r.pairs);
  kv.set("episodes", static_cast<int>(r.episode_scores.size()));
  kv.set("clusters", index.params().clusters);
  kv.set("set_size", index.params().set_size);
  kv.set("gamma", index.params().gamma);
  kv.set("kmeans_iterations", index.iterations());
  kv.set("kmeans_inertia", index.inertia());
  kv.save(fs::path(report_stem.string() + ".txt"));
  return r;
}

KSimReport Pipeline::eval_ksim(const std::string& name) {
  const fs::path dir = fs::exists(paths().rollouts() / name) ? paths().rollouts() / name : fs::path(name);
  require_file(dir / "episodes.bin", "rollout records", "rollout");
  write_config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto index = build_ksim_index();
  fs::create_directories(paths().ksim());
  index.to_checkpoint().save(paths().ksim() / "index.ck");
  const auto r = score_rollouts(dir, paths().ksim() / dir.filename(), index);
  log() << "eval-ksim: " << dir.filename().string() << " score " << r.score << " over " << r.pairs << " steps in "
        << elapsed(t0) << " s\n";
  return r;
}

SweepResult Pipeline::sweep_lambda() {
  write_config();
  auto lambdas = config_.sweep_lambdas;
  if (std::find(lambdas.begin(), lambdas.end(), 0.0) == lambdas.end()) lambdas.insert(lambdas.begin(), 0.0);
  const auto index = build_ksim_index();
  const auto root = paths().sweep();
  SweepResult result;
  std::string csv = "lambda,success_rate,success_se,mean_steps_to_goal,mean_plan_curiosity,ksim,group_success\n";
  for (double l : lambdas) {
    const auto dir = root / lambda_dir(l);
    const auto r = run_rollouts(dir, "sweep", l, config_.eval_group_seeds());
    const auto k = score_rollouts(dir, dir / "ksim", index);
    result.rows.push_back({l, r.eval, k.score});
    std::string groups;
    for (std::size_t g = 0; g < r.eval.group_success.size(); ++g)
      groups += (g ? ";" : "") + format_double(r.eval.group_success[g]);
    csv += format_double(l) + "," + format_double(r.eval.success_rate) + "," + format_double(r.eval.success_se) + "," +
           format_double(r.eval.mean_steps_to_goal) + "," + format_double(r.eval.mean_plan_curiosity) + "," +
           format_double(k.score) + "," + groups + "\n";
  }
  write_text(root / "sweep.csv", csv);

  const SweepRow* best = nullptr;
  for (const auto& row : result.rows)
    if (row.lambda > 0 && (!best || row.eval.success_rate > best->eval.success_rate)) best = &row;
  if (best && config_.confirm_groups >= 2) {
    const auto seeds = config_.confirm_group_seeds();
    const auto base = run_rollouts(root / "confirm_baseline", "confirm", 0.0, seeds);
    const auto top = run_rollouts(root / "confirm_best", "confirm", best->lambda, seeds);
    ConfirmResult c;
    c.best_lambda = best->lambda;
    c.baseline_success = base.eval.success_rate;
    c.best_success = top.eval.success_rate;
    c.baseline_ksim = score_rollouts(root / "confirm_baseline", root / "confirm_baseline" / "ksim", index).score;
    c.best_ksim = score_rollouts(root / "confirm_best", root / "confirm_best" / "ksim", index).score;
    c.comparison = paired_lower_bound(top.eval.group_success, base.eval.group_success, 0.95);
    KeyValues kv;
    kv.set("best_lambda", c.best_lambda);
    kv.set("groups", c.comparison.groups);
    kv.set("episodes_per_group", config_.eval_episodes);
    kv.set("baseline_success", c.baseline_success);
    kv.set("best_success", c.best_success);
    kv.set("mean_difference", c.comparison.mean_difference);
    kv.set("standard_error", c.comparison.standard_error);
    kv.set("t_quantile", c.comparison.t_quantile);
    kv.set("lower_bound_95", c.comparison.lower_bound);
    kv.set("baseline_ksim", c.baseline_ksim);
    kv.set("best_ksim", c.best_ksim);
    kv.save(root / "confirm.txt");
    log() << "sweep-lambda: best lambda " << format_double(c.best_lambda) << ", paired difference "
          << c.comparison.mean_difference << " (95% lower bound " << c.comparison.lower_bound << ")\n";
    result.confirm = c;
  }
  return result;
}

void Pipeline::plot() {
  const auto root = paths().sweep();
  require_file(root / "sweep.csv", "sweep metrics", "sweep-lambda");
  const auto rows = read_csv(root / "sweep.csv");
  std::vector<double> lambdas, success, se, ksim;
  std::optional<double> baseline;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 6) throw StageError("malformed row in " + (root / "sweep.csv").string());
    lambdas.push_back(std::stod(rows[i][0]));
    success.push_back(std::stod(rows[i][1]));
    se.push_back(std::stod(rows[i][2]));
    ksim.push_back(std::stod(rows[i][5]));
    if (lambdas.back() == 0.0) baseline = success.back();
  }
  const auto out = paths().plots();
  write_text(out / "success_vs_lambda.svg", svg_lambda_curve(lambdas, success, se, baseline));

  std::vector<std::string> labels;
  for (double l : lambdas) labels.push_back(format_double(l));
  write_text(out / "ksim_by_lambda.svg", svg_bars(labels, ksim, "K-Sim score by curiosity weight", "K-Sim"));

  auto best = std::max_element(success.begin(), success.end()) - success.begin();
  std::vector<TrajectoryPanel> panels;
  for (double l : {0.0, lambdas[static_cast<std::size_t>(best)]}) {
    const auto file = root / lambda_dir(l) / "episodes.bin";
    if (!fs::exists(file)) continue;
    const auto episodes = read_episodes(file);
    TrajectoryPanel p;
    p.title = l == 0.0 ? "reward only (lambda = 0)" : "lambda = " + format_double(l);
    for (std::size_t e = 0; e < episodes.size() && e < 30; ++e) {
      p.paths.push_back(episodes[e].states);
      p.success.push_back(episodes[e].success);
    }
    panels.push_back(std::move(p));
    if (l == lambdas[static_cast<std::size_t>(best)]) break;
  }
  write_text(out / "trajectories.svg", svg_trajectories(config_.maze_spec(), panels));
  log() << "plot: wrote " << out.string() << "\n";
}

void Pipeline::run_all() {
  gen_data();
  train_diffusion();
  train_reward();
  train_rnd();
  rollout();
  eval_ksim();
  sweep_lambda();
  plot();
}

}  // namespace trajdiff
