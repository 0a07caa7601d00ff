#pragma once

#include "trajdiff/config.hpp"
#include "trajdiff/stats.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajdiff {

/// Raised when a stage finds a missing or stale upstream artifact.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout of a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.txt"; }
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path denoiser() const { return checkpoints() / "denoiser.ck"; }
  std::filesystem::path reward() const { return checkpoints() / "return.ck"; }
  std::filesystem::path rnd() const { return checkpoints() / "rnd.ck"; }
  std::filesystem::path rollouts() const { return root / "rollouts"; }
  std::filesystem::path ksim() const { return root / "ksim"; }
  std::filesystem::path sweep() const { return root / "sweep"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

struct TrainSummary {
  int steps = 0;
  double final_loss = 0.0;  // mean over the last 10% of steps
  double seconds = 0.0;
};

struct RolloutSummary {
  std::string name;
  double lambda = 0.0;
  EvalSummary eval;
  std::vector<std::vector<RolloutRecord>> records;
  int first_state_mismatches = 0;
};

struct KSimReport {
  std::string name;
  double score = 0.0;
  int pairs = 0;
  std::vector<double> episode_scores;
};

struct SweepRow {
  double lambda = 0.0;
  EvalSummary eval;
  double ksim = 0.0;
};

struct ConfirmResult {
  double best_lambda = 0.0;
  double baseline_success = 0.0;
  double best_success = 0.0;
  double baseline_ksim = 0.0;
  double best_ksim = 0.0;
  PairedComparison comparison;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<ConfirmResult> confirm;
};

/// Runs the stages of one experiment inside a run directory. Each stage
/// checks the config digests recorded by its upstream artifacts and writes
/// the effective config to `config.txt`.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, std::ostream* log = nullptr);

  const ExperimentConfig& config() const { return config_; }
  RunPaths paths() const { return {config_.out}; }

  void gen_data();
  TrainSummary train_diffusion();
  TrainSummary train_reward();
  TrainSummary train_rnd();
  /// Guided rollouts over the eval seed groups, written to rollouts/<name>.
  RolloutSummary rollout(const std::string& name = "main");
  /// Scores rollouts/<name> (or any directory holding episodes.bin) against
  /// the training data; writes ksim/<name>.csv and ksim/<name>.txt.
  KSimReport eval_ksim(const std::string& name = "main");
  /// One row per configured lambda; then, when confirm_groups > 0, the best
  /// lambda and lambda = 0 on fresh seed groups.
  SweepResult sweep_lambda();
  /// SVG figures from the metrics files of a finished run.
  void plot();
  void run_all();

  // Artifact access with upstream checks.
  std::vector<Episode> load_episodes() const;
  NormStats norm_stats() const;
  Denoiser load_denoiser() const;
  ReturnPredictor load_reward() const;
  RndPair load_rnd() const;
  KSimIndex build_ksim_index() const;

  /// Rollouts with explicit lambda and seed groups, written to `dir`.
  RolloutSummary run_rollouts(const std::filesystem::path& dir, const std::string& name, double lambda,
                              const std::vector<std::uint64_t>& group_seeds);
  /// Scores <rollout_dir>/episodes.bin; writes <report_stem>.csv and .txt.
  KSimReport score_rollouts(const std::filesystem::path& rollout_dir,
                            const std::filesystem::path& report_stem, const KSimIndex& index) const;

 private:
  void write_config() const;
  std::ostream& log() const;

  ExperimentConfig config_;
  std::ostream* log_;
};

/// Test pairs for K-Sim: every executed (state, action) step, normalized.
std::vector<StateActionPair> episode_pairs(const std::vector<Episode>& episodes, const NormStats& stats);

}  // namespace trajdiff
