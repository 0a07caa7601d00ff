#include "trajdiff/pipeline.hpp"

#include "../support/tiny_config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace trajdiff;
using testing_support::tiny_config;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("trajdiff_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, TextRoundTrip) {
  auto c = tiny_config("x");
  c.guidance.lambda = 0.3;
  c.sweep_lambdas = {0.0, 0.25, 4.0};
  c.rnd.target_gain = 12.5;
  const auto back = ExperimentConfig::from_kv(KeyValues::parse(c.to_kv().to_text()));
  EXPECT_EQ(back.to_kv().to_text(), c.to_kv().to_text());
  EXPECT_EQ(back.sweep_lambdas, c.sweep_lambdas);
  EXPECT_EQ(back.rnd.target_gain, 12.5);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = ExperimentConfig::from_kv(KeyValues::parse("seed = 7\n"));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.horizon, ExperimentConfig().horizon);
}

TEST(Config, UnknownAndInvalidKeysRejected) {
  EXPECT_THROW(ExperimentConfig::from_kv(KeyValues::parse("bogus = 1\n")), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_kv(KeyValues::parse("window.horizon = abc\n")), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_kv(KeyValues::parse("guidance.lambda = -1\n")), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_kv(KeyValues::parse("planner.replan_every = 64\n")), std::invalid_argument);
}

TEST(Config, HashesFollowDependencies) {
  const auto base = tiny_config("x");
  auto eval_only = base;
  eval_only.guidance.lambda = 5.0;
  eval_only.eval_episodes = 9;
  EXPECT_EQ(base.diffusion_hash(), eval_only.diffusion_hash());
  EXPECT_EQ(base.rnd_hash(), eval_only.rnd_hash());

  auto data = base;
  data.data.episodes = 41;
  EXPECT_NE(base.data_hash(), data.data_hash());
  EXPECT_NE(base.diffusion_hash(), data.diffusion_hash());
  EXPECT_NE(base.reward_hash(), data.reward_hash());
  EXPECT_NE(base.rnd_hash(), data.rnd_hash());

  auto rnd = base;
  rnd.rnd.target_gain = 2.0;
  EXPECT_EQ(base.diffusion_hash(), rnd.diffusion_hash());
  EXPECT_NE(base.rnd_hash(), rnd.rnd_hash());
  rnd = base;
  rnd.rnd.normalize_per_step = !base.rnd.normalize_per_step;
  EXPECT_EQ(base.rnd_hash(), rnd.rnd_hash());
}

TEST(Config, DerivedSeedsDiffer) {
  const ExperimentConfig c;
  const std::vector<std::uint64_t> s = {c.data_seed(), c.diffusion_seed(), c.reward_seed(), c.rnd_seed(),
                                        c.rnd_target_seed(), c.ksim_seed()};
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) EXPECT_NE(s[i], s[j]);
  for (auto e : c.eval_group_seeds())
    for (auto f : c.confirm_group_seeds()) EXPECT_NE(e, f);
}

TEST(Pipeline, MissingUpstreamIsReported) {
  const auto dir = fresh_dir("missing");
  Pipeline p(tiny_config(dir));
  try {
    p.train_diffusion();
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Pipeline, StaleUpstreamIsReported) {
  const auto dir = fresh_dir("stale");
  auto c = tiny_config(dir);
  Pipeline(c).gen_data();
  Pipeline(c).train_diffusion();
  c.data.episodes = 41;
  Pipeline changed(c);
  changed.gen_data();
  EXPECT_THROW(changed.load_denoiser(), StageError);
  EXPECT_THROW(changed.rollout(), StageError);
  fs::remove_all(dir);
}

TEST(Pipeline, RunAllWritesReport) {
  const auto dir = fresh_dir("runall");
  std::ostringstream log;
  Pipeline p(tiny_config(dir), &log);
  p.run_all();
  const RunPaths paths = p.paths();
  for (const auto& f : {paths.config(), paths.denoiser(), paths.reward(), paths.rnd(),
                        paths.rollouts() / "main" / "episodes.csv", paths.rollouts() / "main" / "metrics.txt",
                        paths.ksim() / "main.csv", paths.ksim() / "main.txt", paths.sweep() / "sweep.csv",
                        paths.sweep() / "confirm.txt", paths.plots() / "success_vs_lambda.svg",
                        paths.plots() / "trajectories.svg"})
    EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_EQ(ExperimentConfig::load(paths.config()).to_kv().to_text(), p.config().to_kv().to_text());
  const auto metrics = KeyValues::load(paths.rollouts() / "main" / "metrics.txt");
  EXPECT_EQ(metrics.get_int("first_state_mismatches"), 0);
  const double ksim = KeyValues::load(paths.ksim() / "main.txt").get_double("score");
  EXPECT_GT(ksim, 0.0);
  EXPECT_LE(ksim, 1.0);
  fs::remove_all(dir);
}

TEST(Pipeline, StagesAreBitReproducible) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  Pipeline(tiny_config(a)).run_all();
  Pipeline(tiny_config(b)).run_all();
  const auto files = testing_support::list_files(a);
  ASSERT_EQ(files, testing_support::list_files(b));
  for (const auto& f : files) {
    if (f == "config.txt") continue;  // records the output directory
    EXPECT_EQ(testing_support::read_bytes(a / f), testing_support::read_bytes(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, EpisodePairsAreNormalizedSteps) {
  Episode ep;
  ep.states = {{0.0, 0.0}, {1.0, 1.0}};
  ep.actions = {{0.1, -0.1}};
  ep.rewards = {0.0};
  const NormStats stats({0.0, 0.0, -0.1, -0.1}, {1.0, 1.0, 0.1, 0.1});
  const auto pairs = episode_pairs({ep}, stats);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].state, Eigen::Vector2d(-1.0, -1.0));
  EXPECT_EQ(pairs[0].action, Eigen::Vector2d(1.0, -1.0));
}

#ifdef TRAJDIFF_CLI
TEST(Cli, SmokeRun) {
  const auto dir = fresh_dir("cli");
  fs::create_directories(dir);
  tiny_config(dir).save(dir / "tiny.txt");
  const std::string cli = TRAJDIFF_CLI;
  const std::string cfg = " --config " + (dir / "tiny.txt").string();
  EXPECT_EQ(std::system((cli + " show-config" + cfg + " > " + (dir / "shown.txt").string()).c_str()), 0);
  EXPECT_EQ(ExperimentConfig::load(dir / "shown.txt").horizon, 8);
  // Stage order is enforced.
  EXPECT_NE(std::system((cli + " train-diffusion" + cfg + " 2> /dev/null").c_str()), 0);
  for (const char* stage : {"gen-data", "train-diffusion", "train-reward", "train-rnd", "rollout", "eval-ksim"})
    ASSERT_EQ(std::system((cli + " " + stage + cfg + " 2> /dev/null").c_str()), 0) << stage;
  // Later invocations reuse the stored config of the run directory.
  EXPECT_EQ(std::system((cli + " rollout --name l0 --lambda 0 --out " + dir.string() + " 2> /dev/null").c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "rollouts" / "l0" / "metrics.txt"));
  EXPECT_TRUE(fs::exists(dir / "ksim" / "main.txt"));
  EXPECT_NE(std::system((cli + " no-such-stage 2> /dev/null").c_str()), 0);
  fs::remove_all(dir);
}
#endif
