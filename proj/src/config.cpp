#include "trajdiff/config.hpp"

#include <functional>
#include <set>
#include <stdexcept>

namespace trajdiff {

namespace {

struct Field {
  std::string key;
  std::function<void(KeyValues&)> put;
  std::function<void(const KeyValues&)> get;
};

class Binder {
 public:
  void add(const std::string& key, int& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set(key, v); },
                       [&v, key](const KeyValues& kv) { v = static_cast<int>(kv.get_int(key)); }});
  }
  void add(const std::string& key, double& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set(key, v); },
                       [&v, key](const KeyValues& kv) { v = kv.get_double(key); }});
  }
  void add(const std::string& key, bool& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set(key, v); },
                       [&v, key](const KeyValues& kv) { v = kv.get_bool(key); }});
  }
  void add(const std::string& key, std::uint64_t& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set(key, static_cast<unsigned long long>(v)); },
                       [&v, key](const KeyValues& kv) { v = kv.get_uint(key); }});
  }
  void add(const std::string& key, std::string& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set(key, v); },
                       [&v, key](const KeyValues& kv) { v = kv.get(key); }});
  }
  void add(const std::string& key, std::vector<double>& v) {
    fields_.push_back({key, [&v, key](KeyValues& kv) { kv.set_doubles(key, v); },
                       [&v, key](const KeyValues& kv) { v = kv.get_doubles(key); }});
  }
  void add_train(const std::string& prefix, TrainOptions& t) {
    add(prefix + ".steps", t.steps);
    add(prefix + ".batch", t.batch);
    add(prefix + ".lr", t.lr);
    add(prefix + ".clip_norm", t.clip_norm);
  }
  const std::vector<Field>& fields() const { return fields_; }

 private:
  std::vector<Field> fields_;
};

// Groups used for hashing; a field joins the first group whose prefix matches.
Binder bind(ExperimentConfig& c) {
  Binder b;
  b.add("maze", c.maze);
  b.add("seed", c.seed);
  b.add("data.episodes", c.data.episodes);
  b.add("data.expert_fraction", c.data.expert_fraction);
  b.add("data.noise_sigma", c.data.noise_sigma);
  b.add("data.expert_speed", c.data.expert_speed);
  b.add("window.horizon", c.horizon);
  b.add("window.stride", c.stride);
  b.add("window.discount", c.discount);
  b.add("diffusion.steps", c.diffusion_steps);
  b.add("diffusion.cosine_offset", c.cosine_offset);
  b.add("denoiser.hidden_width", c.denoiser.hidden_width);
  b.add("denoiser.hidden_layers", c.denoiser.hidden_layers);
  b.add("denoiser.embed_dim", c.denoiser.embed_dim);
  b.add("reward.hidden_width", c.reward_net.hidden_width);
  b.add("reward.hidden_layers", c.reward_net.hidden_layers);
  b.add("reward.embed_dim", c.reward_net.embed_dim);
  b.add("rnd.output_dim", c.rnd.output_dim);
  b.add("rnd.hidden_width", c.rnd.hidden_width);
  b.add("rnd.target_layers", c.rnd.target_layers);
  b.add("rnd.predictor_layers", c.rnd.predictor_layers);
  b.add("rnd.embed_dim", c.rnd.embed_dim);
  b.add("rnd.target_gain", c.rnd.target_gain);
  b.add("rnd.normalize_per_step", c.rnd.normalize_per_step);
  b.add_train("train.diffusion", c.train_diffusion);
  b.add_train("train.reward", c.train_reward);
  b.add_train("train.rnd", c.train_rnd);
  b.add("guidance.alpha", c.guidance.alpha);
  b.add("guidance.lambda", c.guidance.lambda);
  b.add("guidance.enable_reward", c.guidance.enable_reward);
  b.add("guidance.enable_curiosity", c.guidance.enable_curiosity);
  b.add("planner.replan_every", c.replan_every);
  b.add("planner.clip_denoised", c.clip_denoised);
  b.add("eval.episodes", c.eval_episodes);
  b.add("eval.groups", c.eval_groups);
  b.add("eval.confirm_groups", c.confirm_groups);
  b.add("sweep.lambdas", c.sweep_lambdas);
  b.add("ksim.clusters", c.ksim.clusters);
  b.add("ksim.set_size", c.ksim.set_size);
  b.add("ksim.gamma", c.ksim.gamma);
  b.add("ksim.max_iterations", c.ksim.max_iterations);
  b.add("ksim.tolerance", c.ksim.tolerance);
  b.add("out", c.out);
  return b;
}

bool has_prefix(const std::string& key, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (key == p || key.rfind(p + ".", 0) == 0) return true;
  return false;
}

std::uint64_t hash_keys(const ExperimentConfig& c, const std::vector<std::string>& prefixes,
                        std::uint64_t upstream, const std::vector<std::string>& exclude = {}) {
  const KeyValues all = c.to_kv();
  KeyValues picked;
  picked.set("upstream", hex64(upstream));
  for (const auto& k : all.keys())
    if (has_prefix(k, prefixes) && !has_prefix(k, exclude)) picked.set(k, all.get(k));
  const std::string text = picked.to_text();
  return fnv1a(text.data(), text.size());
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  guidance.alpha = 30.0;
  guidance.lambda = 1.0;
  rnd.target_gain = 20.0;
  rnd.normalize_per_step = true;
  train_diffusion = {20000, 64, 1e-3, 1.0, 0};
  train_reward = {4000, 64, 3e-4, 1.0, 0};
  train_rnd = {4000, 64, 3e-4, 1.0, 0};
  sweep_lambdas = {0.0, 0.1, 0.3, 1.0, 3.0, 10.0};
}

KeyValues ExperimentConfig::to_kv() const {
  ExperimentConfig copy = *this;
  KeyValues kv;
  const Binder b = bind(copy);
  for (const auto& f : b.fields()) f.put(kv);
  return kv;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValues& kv) {
  ExperimentConfig c;
  const Binder b = bind(c);
  std::set<std::string> known;
  for (const auto& f : b.fields()) {
    known.insert(f.key);
    if (kv.contains(f.key)) {
      try {
        f.get(kv);
      } catch (const std::exception& e) {
        throw std::invalid_argument("config key '" + f.key + "': " + e.what());
      }
    }
  }
  for (const auto& k : kv.keys())
    if (!known.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  return from_kv(KeyValues::load(file));
}

void ExperimentConfig::save(const std::filesystem::path& file) const { to_kv().save(file); }

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid config: " + what);
  };
  maze_spec().validate();
  require(data.episodes >= 1, "data.episodes must be >= 1");
  require(data.expert_fraction >= 0 && data.expert_fraction <= 1, "data.expert_fraction must lie in [0, 1]");
  require(data.noise_sigma >= 0, "data.noise_sigma must be >= 0");
  require(data.expert_speed > 0, "data.expert_speed must be positive");
  require(horizon >= 1, "window.horizon must be >= 1");
  require(stride >= 1, "window.stride must be >= 1");
  require(discount > 0 && discount <= 1, "window.discount must lie in (0, 1]");
  require(diffusion_steps >= 1, "diffusion.steps must be >= 1");
  for (const auto* t : {&train_diffusion, &train_reward, &train_rnd}) {
    require(t->steps >= 0, "train.*.steps must be >= 0");
    require(t->batch >= 1, "train.*.batch must be >= 1");
    require(t->lr > 0, "train.*.lr must be positive");
  }
  guidance.validate();
  require(replan_every >= 1 && replan_every <= horizon, "planner.replan_every must lie in [1, horizon]");
  require(eval_episodes >= 1, "eval.episodes must be >= 1");
  require(eval_groups >= 1, "eval.groups must be >= 1");
  require(confirm_groups >= 0, "eval.confirm_groups must be >= 0");
  for (double l : sweep_lambdas) require(l >= 0, "sweep.lambdas must be >= 0");
  require(ksim.clusters >= 1 && ksim.set_size >= 1 && ksim.gamma > 0, "ksim parameters out of range");
  require(!out.empty(), "out must not be empty");
}

DatasetParams ExperimentConfig::dataset_params() const {
  DatasetParams p = data;
  p.seed = data_seed();
  return p;
}

PlannerConfig ExperimentConfig::planner_config() const {
  PlannerConfig p;
  p.replan_every = replan_every;
  p.guided = true;
  p.guidance = guidance;
  p.clip_denoised = clip_denoised;
  return p;
}

std::uint64_t ExperimentConfig::data_hash() const {
  return hash_keys(*this, {"maze", "seed", "data"}, 0);
}

std::uint64_t ExperimentConfig::diffusion_hash() const {
  return hash_keys(*this, {"window", "diffusion", "denoiser", "train.diffusion"}, data_hash());
}

std::uint64_t ExperimentConfig::reward_hash() const {
  return hash_keys(*this, {"window", "diffusion", "reward", "train.reward"}, data_hash());
}

std::uint64_t ExperimentConfig::rnd_hash() const {
  // normalize_per_step only affects how the trained pair is queried.
  return hash_keys(*this, {"window", "diffusion", "rnd", "train.rnd"}, data_hash(), {"rnd.normalize_per_step"});
}

std::vector<std::uint64_t> ExperimentConfig::eval_group_seeds() const {
  std::vector<std::uint64_t> s;
  for (int g = 0; g < eval_groups; ++g) s.push_back(derive_seed(seed, 100 + static_cast<std::uint64_t>(g)));
  return s;
}

std::vector<std::uint64_t> ExperimentConfig::confirm_group_seeds() const {
  std::vector<std::uint64_t> s;
  for (int g = 0; g < confirm_groups; ++g) s.push_back(derive_seed(seed, 500 + static_cast<std::uint64_t>(g)));
  return s;
}

}  // namespace trajdiff
