#pragma once

#include "trajdiff/checkpoint.hpp"
#include "trajdiff/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace trajdiff {

struct StateActionPair {
  Vector state;
  Vector action;
  int episode = 0;
  int step = 0;
};

struct KSimParams {
  int clusters = 50;
  int set_size = 100;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-4;  // relative inertia change
};

struct NearestPair {
  std::size_t index = 0;  // into KSimIndex::pairs order
  double dist_sq = 0.0;
};

/// min(1, gamma / dist_sq); distances at or below gamma (including 0)
/// contribute exactly 1.
double ksim_contribution(double dist_sq, double gamma);

/// K-means over training states with per-cluster member lists. Pairs are
/// kept sorted by (episode, step); all ties resolve to the lowest index.
class KSimIndex {
 public:
  static constexpr const char* kTag = "ksim";

  /// Lloyd iterations from k-means++ seeds. Throws std::invalid_argument
  /// when there are fewer distinct states than clusters.
  static KSimIndex build(std::vector<StateActionPair> pairs, const KSimParams& params);

  /// Nearest centroid to `state`, then the `set_size` members nearest in
  /// state, then the one nearest in action. dist_sq is over the
  /// concatenated (state, action) difference.
  NearestPair nearest_pair(const Vector& state, const Vector& action) const;

  const KSimParams& params() const { return params_; }
  std::size_t size() const { return static_cast<std::size_t>(states_.cols()); }
  const Matrix& states() const { return states_; }
  const Matrix& actions() const { return actions_; }
  const Matrix& centroids() const { return centroids_; }
  const std::vector<int>& assignment() const { return assignment_; }
  const std::vector<std::vector<std::size_t>>& members() const { return members_; }
  std::pair<int, int> provenance(std::size_t index) const;
  double inertia() const { return inertia_; }
  int iterations() const { return iterations_; }

  Checkpoint to_checkpoint() const;
  static KSimIndex from_checkpoint(const Checkpoint& ck);

 private:
  int nearest_centroid(const Vector& state, bool skip_empty) const;
  void assign();
  void update_centroids();

  KSimParams params_;
  Matrix states_;   // state_dim x n
  Matrix actions_;  // action_dim x n
  std::vector<int> episode_;
  std::vector<int> step_;
  Matrix centroids_;  // state_dim x m
  std::vector<int> assignment_;
  std::vector<std::vector<std::size_t>> members_;
  double inertia_ = 0.0;
  int iterations_ = 0;
};

struct KSimScore {
  double value = 0.0;
  int n = 0;
  std::vector<double> contributions;
};

/// Mean contribution over test pairs. Throws std::invalid_argument when empty.
KSimScore ksim_score(const std::vector<StateActionPair>& test, const KSimIndex& index);

/// Sum of squared distances of states to their assigned centroids.
double kmeans_inertia(const Matrix& points, const Matrix& centroids, const std::vector<int>& assignment);

}  // namespace trajdiff
