#include "trajdiff/planner.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trajdiff {

Episode RolloutRecord::to_episode() const {
  Episode ep;
  for (const auto& s : steps) {
    ep.states.push_back(s.state);
    ep.actions.push_back(s.action);
    ep.rewards.push_back(s.reward);
  }
  ep.states.push_back(final_state);
  ep.success = success;
  return ep;
}

Planner::Planner(MazeEnv env, NoisePredictor model, WindowShape shape, const NoiseSchedule& schedule,
                 NormStats stats, const ReturnPredictor* predictor, const RndPair* pair,
                 PlannerConfig config)
    : env_(std::move(env)),
      model_(std::move(model)),
      shape_(shape),
      schedule_(schedule),
      stats_(std::move(stats)),
      predictor_(predictor),
      pair_(pair),
      config_(config) {
  if (config_.replan_every < 1 || config_.replan_every > shape_.horizon)
    throw std::invalid_argument("replan_every must lie in [1, horizon]");
  if (stats_.columns() != shape_.width()) throw std::invalid_argument("planner: normalization width mismatch");
  if (config_.guided) guidance_ = make_guidance(predictor_, pair_, config_.guidance);
}

EnvState Planner::start_state(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x5354));
  return env_.sample_start(rng);
}

RolloutRecord Planner::rollout(std::uint64_t seed) const {
  const std::uint64_t seeds[1] = {seed};
  return rollout_batch(seeds).front();
}

std::vector<RolloutRecord> Planner::rollout_batch(std::span<const std::uint64_t> seeds) const {
  const auto n = seeds.size();
  std::vector<RolloutRecord> out(n);
  std::vector<EnvState> state(n);
  std::vector<std::uint8_t> active(n, 1);
  for (std::size_t e = 0; e < n; ++e) {
    out[e].seed = seeds[e];
    state[e] = start_state(seeds[e]);
  }
  const SamplerOptions options{config_.guidance.alpha, config_.clip_denoised};
  const int ds = shape_.state_dim;

  for (int replan = 0;; ++replan) {
    std::vector<std::size_t> live;
    for (std::size_t e = 0; e < n; ++e)
      if (active[e]) live.push_back(e);
    if (live.empty()) break;

    const auto B = static_cast<Eigen::Index>(live.size());
    Matrix cond(ds, B);
    std::vector<std::uint64_t> plan_seeds(live.size());
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto e = live[static_cast<std::size_t>(j)];
      cond.col(j) = stats_.normalize_state(state[e].position);
      plan_seeds[static_cast<std::size_t>(j)] = derive_seed(seeds[e], 1000 + static_cast<std::uint64_t>(replan));
    }

    SampleResult plans;
    try {
      plans = sample_batch(model_, schedule_, shape_, cond, config_.guided ? &guidance_ : nullptr, options,
                           plan_seeds);
      if (!plans.windows.allFinite()) throw std::runtime_error("sampled plan contains non-finite values");
    } catch (const std::exception& ex) {
      for (auto e : live) {
        out[e].failure = std::string("sampler failure: ") + ex.what();
        out[e].success = false;
        out[e].final_state = state[e].position;
        active[e] = 0;
      }
      break;
    }

    Vector curiosity = Vector::Zero(B);
    if (pair_) curiosity = pair_->curiosity(plans.windows, uniform_steps(1, B));

    for (Eigen::Index j = 0; j < B; ++j) {
      const auto e = live[static_cast<std::size_t>(j)];
      const auto plan = TrajectoryWindow::from_flat(plans.windows.col(j), shape_, true);
      ReplanRecord rec;
      rec.env_step = state[e].step_count;
      rec.guidance_skips = plans.guidance_skips[static_cast<std::size_t>(j)];
      rec.plan_curiosity = curiosity[j];
      rec.first_state_matches = (plan.values.row(0).head(ds).transpose() - cond.col(j)).cwiseAbs().maxCoeff() == 0.0;
      out[e].replans.push_back(rec);

      for (int k = 0; k < config_.replan_every; ++k) {
        const Vector a = stats_.denormalize_action(plan.values.row(k).tail(shape_.action_dim).transpose(), ds);
        const Action action = env_.make_action(Vec2(a[0], a[1]));
        const auto r = env_.step(state[e], action);
        out[e].steps.push_back({state[e].position, action.delta(), r.reward});
        state[e] = r.state;
        if (r.reward > 0) out[e].success = true;
        if (r.done) {
          active[e] = 0;
          break;
        }
      }
      out[e].final_state = state[e].position;
    }
  }
  return out;
}

std::vector<std::uint64_t> episode_seeds(std::uint64_t group_seed, int episodes) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) s[static_cast<std::size_t>(e)] = derive_seed(group_seed, static_cast<std::uint64_t>(e));
  return s;
}

EvalSummary summarize(const std::vector<std::vector<RolloutRecord>>& groups) {
  EvalSummary s;
  double steps_sum = 0.0, curiosity_sum = 0.0;
  int successes = 0, replans = 0;
  for (const auto& g : groups) {
    int ok = 0;
    for (const auto& r : g) {
      ++s.episodes;
      if (r.success) {
        ++ok;
        steps_sum += r.length();
      }
      if (!r.failure.empty()) ++s.sampler_failures;
      for (const auto& rp : r.replans) {
        curiosity_sum += rp.plan_curiosity;
        s.guidance_skips += rp.guidance_skips;
        ++replans;
      }
    }
    successes += ok;
    s.group_success.push_back(g.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(g.size()));
  }
  const auto G = static_cast<double>(s.group_success.size());
  if (G > 0) {
    double mean = 0.0;
    for (double v : s.group_success) mean += v;
    mean /= G;
    double var = 0.0;
    for (double v : s.group_success) var += (v - mean) * (v - mean);
    s.success_se = G > 1 ? std::sqrt(var / (G - 1) / G) : 0.0;
  }
  s.success_rate = s.episodes ? static_cast<double>(successes) / s.episodes : 0.0;
  s.mean_steps_to_goal = successes ? steps_sum / successes : std::numeric_limits<double>::quiet_NaN();
  s.mean_plan_curiosity = replans ? curiosity_sum / replans : 0.0;
  return s;
}

EvalSummary evaluate(const Planner& planner, int episodes_per_group,
                     std::span<const std::uint64_t> group_seeds,
                     std::vector<std::vector<RolloutRecord>>* records) {
  if (episodes_per_group < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  std::vector<std::vector<RolloutRecord>> groups;
  for (auto gs : group_seeds) {
    const auto seeds = episode_seeds(gs, episodes_per_group);
    groups.push_back(planner.rollout_batch(seeds));
  }
  auto s = summarize(groups);
  if (records) *records = std::move(groups);
  return s;
}

}  // namespace trajdiff
