#include "trajdiff/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

using namespace trajdiff;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<int> episodes;
  std::string rollout_name = "main";
};

// Explicit --config wins; otherwise reuse the run directory's stored config.
ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = ExperimentConfig::load(o.config);
  } else {
    const std::filesystem::path stored =
        std::filesystem::path(o.out.value_or(ExperimentConfig().out)) / "config.txt";
    if (std::filesystem::exists(stored)) c = ExperimentConfig::load(stored);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.lambda) c.guidance.lambda = *o.lambda;
  if (o.alpha) c.guidance.alpha = *o.alpha;
  if (o.episodes) c.eval_episodes = *o.episodes;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided trajectory diffusion planning on a point maze"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Key/value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Base seed");
  app.add_option("--out", o.out, "Run directory");
  app.add_option("--lambda", o.lambda, "Curiosity weight for rollout");
  app.add_option("--alpha", o.alpha, "Guidance scale");
  app.add_option("--episodes", o.episodes, "Episodes per evaluation group");

  auto* gen = app.add_subcommand("gen-data", "Generate the mixed expert/random dataset");
  auto* tdiff = app.add_subcommand("train-diffusion", "Train the noise-prediction model");
  auto* treward = app.add_subcommand("train-reward", "Train the return predictor");
  auto* trnd = app.add_subcommand("train-rnd", "Train the RND predictor on successful windows");
  auto* roll = app.add_subcommand("rollout", "Evaluate the guided planner");
  roll->add_option("--name", o.rollout_name, "Rollout directory name under rollouts/");
  auto* ksim = app.add_subcommand("eval-ksim", "Score rollouts with K-Sim");
  ksim->add_option("--name", o.rollout_name, "Rollout name under rollouts/ or a directory");
  auto* sweep = app.add_subcommand("sweep-lambda", "Sweep the curiosity weight");
  auto* plot = app.add_subcommand("plot", "Write SVG figures from run metrics");
  auto* all = app.add_subcommand("run-all", "Run every stage in order");
  auto* show = app.add_subcommand("show-config", "Print the effective config");

  // Global options may also follow the subcommand name.
  for (auto* sub : {gen, tdiff, treward, trnd, roll, ksim, sweep, plot, all, show}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    Pipeline p(resolve_config(o), &std::cerr);
    if (gen->parsed()) p.gen_data();
    else if (tdiff->parsed()) p.train_diffusion();
    else if (treward->parsed()) p.train_reward();
    else if (trnd->parsed()) p.train_rnd();
    else if (roll->parsed()) p.rollout(o.rollout_name);
    else if (ksim->parsed()) p.eval_ksim(o.rollout_name);
    else if (sweep->parsed()) p.sweep_lambda();
    else if (plot->parsed()) p.plot();
    else if (all->parsed()) p.run_all();
    else if (show->parsed()) std::cout << p.config().to_kv().to_text();
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
