#include "trajdiff/ksim.hpp"

#include "trajdiff/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace trajdiff {

double ksim_contribution(double dist_sq, double gamma) {
  if (dist_sq <= gamma) return 1.0;
  return gamma / dist_sq;
}

double kmeans_inertia(const Matrix& points, const Matrix& centroids, const std::vector<int>& assignment) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < points.cols(); ++j)
    s += (points.col(j) - centroids.col(assignment[static_cast<std::size_t>(j)])).squaredNorm();
  return s;
}

KSimIndex KSimIndex::build(std::vector<StateActionPair> pairs, const KSimParams& params) {
  if (params.clusters < 1) throw std::invalid_argument("build_index: need at least one cluster");
  if (params.set_size < 1) throw std::invalid_argument("build_index: set_size must be >= 1");
  if (!(params.gamma > 0)) throw std::invalid_argument("build_index: gamma must be positive");
  if (pairs.empty()) throw std::invalid_argument("build_index: no training pairs");
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.episode, a.step) < std::tie(b.episode, b.step);
  });

  KSimIndex idx;
  idx.params_ = params;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const auto ds = pairs.front().state.size();
  const auto da = pairs.front().action.size();
  idx.states_.resize(ds, n);
  idx.actions_.resize(da, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = pairs[static_cast<std::size_t>(j)];
    if (p.state.size() != ds || p.action.size() != da)
      throw std::invalid_argument("build_index: inconsistent pair dimensions");
    idx.states_.col(j) = p.state;
    idx.actions_.col(j) = p.action;
    idx.episode_.push_back(p.episode);
    idx.step_.push_back(p.step);
  }

  {
    std::vector<std::vector<double>> distinct;
    distinct.reserve(pairs.size());
    for (const auto& p : pairs) distinct.emplace_back(p.state.data(), p.state.data() + ds);
    std::sort(distinct.begin(), distinct.end());
    const auto unique = std::unique(distinct.begin(), distinct.end()) - distinct.begin();
    if (unique < params.clusters)
      throw std::invalid_argument("build_index: " + std::to_string(unique) + " distinct states for " +
                                  std::to_string(params.clusters) + " clusters");
  }

  // k-means++ seeding.
  Rng rng(params.seed);
  const int m = params.clusters;
  idx.centroids_.resize(ds, m);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  idx.centroids_.col(0) = idx.states_.col(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < m; ++c) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      auto& d = d2[static_cast<std::size_t>(j)];
      d = std::min(d, (idx.states_.col(j) - idx.centroids_.col(c - 1)).squaredNorm());
      total += d;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    Eigen::Index chosen = n - 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = d2[static_cast<std::size_t>(j)];
      if (d <= 0.0) continue;
      if (target < d) {
        chosen = j;
        break;
      }
      target -= d;
    }
    // Rounding can leave `chosen` on a zero-distance point; take the last positive one.
    while (d2[static_cast<std::size_t>(chosen)] <= 0.0 && chosen > 0) --chosen;
    idx.centroids_.col(c) = idx.states_.col(chosen);
  }

  idx.assign();
  double prev = idx.inertia_;
  idx.iterations_ = 0;
  for (int it = 0; it < params.max_iterations; ++it) {
    idx.update_centroids();
    idx.assign();
    ++idx.iterations_;
    const double cur = idx.inertia_;
    if (prev <= 0.0 || std::abs(prev - cur) / prev < params.tolerance) break;
    prev = cur;
  }
  return idx;
}

int KSimIndex::nearest_centroid(const Vector& state, bool skip_empty) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids_.cols(); ++c) {
    if (skip_empty && members_[static_cast<std::size_t>(c)].empty()) continue;
    const double d = (centroids_.col(c) - state).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

void KSimIndex::assign() {
  const auto n = states_.cols();
  assignment_.assign(static_cast<std::size_t>(n), 0);
  members_.assign(static_cast<std::size_t>(centroids_.cols()), {});
  for (Eigen::Index j = 0; j < n; ++j) {
    const int c = nearest_centroid(states_.col(j), false);
    assignment_[static_cast<std::size_t>(j)] = c;
    members_[static_cast<std::size_t>(c)].push_back(static_cast<std::size_t>(j));
  }
  inertia_ = kmeans_inertia(states_, centroids_, assignment_);
}

void KSimIndex::update_centroids() {
  const auto m = centroids_.cols();
  const Matrix old = centroids_;
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(states_.cols()), 0);
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto& mem = members_[static_cast<std::size_t>(c)];
    if (mem.empty()) continue;
    Vector sum = Vector::Zero(states_.rows());
    for (auto j : mem) sum += states_.col(static_cast<Eigen::Index>(j));
    centroids_.col(c) = sum / static_cast<double>(mem.size());
  }
  // Empty cluster: re-seed at the point farthest from its own centroid.
  for (Eigen::Index c = 0; c < m; ++c) {
    if (!members_[static_cast<std::size_t>(c)].empty()) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index j = 0; j < states_.cols(); ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      const double d = (states_.col(j) - old.col(assignment_[static_cast<std::size_t>(j)])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = j;
      }
    }
    if (far >= 0) {
      taken[static_cast<std::size_t>(far)] = 1;
      centroids_.col(c) = states_.col(far);
    }
  }
}

std::pair<int, int> KSimIndex::provenance(std::size_t index) const {
  return {episode_.at(index), step_.at(index)};
}

NearestPair KSimIndex::nearest_pair(const Vector& state, const Vector& action) const {
  if (state.size() != states_.rows() || action.size() != actions_.rows())
    throw std::invalid_argument("nearest_pair: query dimensions do not match the index");
  const auto& mem = members_[static_cast<std::size_t>(nearest_centroid(state, true))];

  std::vector<std::pair<double, std::size_t>> by_state;
  by_state.reserve(mem.size());
  for (auto j : mem) by_state.emplace_back((states_.col(static_cast<Eigen::Index>(j)) - state).squaredNorm(), j);
  const auto keep = std::min<std::size_t>(by_state.size(), static_cast<std::size_t>(params_.set_size));
  std::partial_sort(by_state.begin(), by_state.begin() + static_cast<std::ptrdiff_t>(keep), by_state.end());

  NearestPair best{by_state.front().second, std::numeric_limits<double>::infinity()};
  double best_action = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < keep; ++k) {
    const auto j = by_state[k].second;
    const double da = (actions_.col(static_cast<Eigen::Index>(j)) - action).squaredNorm();
    if (da < best_action || (da == best_action && j < best.index)) {
      best_action = da;
      best = {j, by_state[k].first + da};
    }
  }
  return best;
}

Checkpoint KSimIndex::to_checkpoint() const {
  Checkpoint ck(kTag);
  ck.set_meta("clusters", std::to_string(params_.clusters));
  ck.set_meta("set_size", std::to_string(params_.set_size));
  ck.set_meta("gamma", format_double(params_.gamma));
  ck.set_meta("seed", std::to_string(params_.seed));
  ck.set_meta("iterations", std::to_string(iterations_));
  auto put = [&](const std::string& name, const Matrix& m) {
    NamedTensor t{name, {m.cols(), m.rows()}, std::vector<double>(m.data(), m.data() + m.size())};
    ck.add(std::move(t));
  };
  put("states", states_);
  put("actions", actions_);
  put("centroids", centroids_);
  NamedTensor prov{"provenance", {states_.cols(), 2}, {}};
  for (std::size_t j = 0; j < episode_.size(); ++j) {
    prov.data.push_back(episode_[j]);
    prov.data.push_back(step_[j]);
  }
  ck.add(std::move(prov));
  return ck;
}

KSimIndex KSimIndex::from_checkpoint(const Checkpoint& ck) {
  if (ck.tag() != kTag) throw std::runtime_error("not a K-Sim index: " + ck.tag());
  KSimIndex idx;
  idx.params_.clusters = std::stoi(ck.meta("clusters"));
  idx.params_.set_size = std::stoi(ck.meta("set_size"));
  idx.params_.gamma = std::stod(ck.meta("gamma"));
  idx.params_.seed = std::stoull(ck.meta("seed"));
  idx.iterations_ = std::stoi(ck.meta("iterations"));
  auto get = [&](const std::string& name) {
    const auto& t = ck.tensor(name);
    return Matrix(Eigen::Map<const Matrix>(t.data.data(), t.shape[1], t.shape[0]));
  };
  idx.states_ = get("states");
  idx.actions_ = get("actions");
  idx.centroids_ = get("centroids");
  const auto& prov = ck.tensor("provenance").data;
  for (std::size_t j = 0; j + 1 < prov.size(); j += 2) {
    idx.episode_.push_back(static_cast<int>(prov[j]));
    idx.step_.push_back(static_cast<int>(prov[j + 1]));
  }
  idx.assign();
  return idx;
}

KSimScore ksim_score(const std::vector<StateActionPair>& test, const KSimIndex& index) {
  if (test.empty()) throw std::invalid_argument("ksim_score: empty test set");
  KSimScore score;
  score.n = static_cast<int>(test.size());
  score.contributions.reserve(test.size());
  double sum = 0.0;
  for (const auto& p : test) {
    const auto nearest = index.nearest_pair(p.state, p.action);
    const double c = ksim_contribution(nearest.dist_sq, index.params().gamma);
    score.contributions.push_back(c);
    sum += c;
  }
  score.value = sum / static_cast<double>(test.size());
  return score;
}

}  // namespace trajdiff
