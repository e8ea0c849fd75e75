#include "coadapt/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace coadapt {

using nlohmann::json;

IslandMode parse_island_mode(const std::string& name) {
  if (name == "heuristic") return IslandMode::heuristic;
  if (name == "learned") return IslandMode::learned;
  if (name == "fixed") return IslandMode::fixed;
  throw ConfigError("unknown island mode '" + name + "' (expected heuristic, learned or fixed)");
}

const char* to_string(IslandMode mode) {
  switch (mode) {
    case IslandMode::heuristic: return "heuristic";
    case IslandMode::learned: return "learned";
    case IslandMode::fixed: return "fixed";
  }
  return "?";
}

namespace {

// Both directions of the JSON mapping go through the same visit() functions,
// so a key can't be readable but not dumpable (or vice versa).
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      read(j_.at(key), value, path_ + "." + key);
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <class T, class F>
  void section(const char* key, T& value, F&& visit_fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), path_ + "." + key);
    visit_fn(sub, value);
    sub.finish();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where() + "." + item.key() + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_; }

  template <class T>
  static void read(const json& j, T& value, const std::string&) { value = j.get<T>(); }

  static void read(const json& j, env::ObservationMask& value, const std::string& path) {
    try {
      value = env::parse_mask(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

  static void read(const json& j, IslandMode& value, const std::string&) {
    value = parse_island_mode(j.get<std::string>());
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <class T>
  void operator()(const char* key, T& value) { j_[key] = value; }
  void operator()(const char* key, env::ObservationMask& value) { j_[key] = env::to_string(value); }
  void operator()(const char* key, IslandMode& value) { j_[key] = to_string(value); }

  template <class T, class F>
  void section(const char* key, T& value, F&& visit_fn) {
    Writer sub(j_[key]);
    visit_fn(sub, value);
  }

 private:
  json& j_;
};

template <class V>
void visit(V& v, terrain::NoiseParams& n) {
  v("amplitude", n.amplitude);
  v("frequency", n.frequency);
  v("octaves", n.octaves);
  v("gain", n.gain);
  v("lacunarity", n.lacunarity);
}

template <class V>
void visit(V& v, TerrainSettings& t) {
  v("flat", t.flat);
  v("nx", t.nx);
  v("nz", t.nz);
  v("cell_size", t.cell_size);
  v.section("noise", t.noise, [](auto& s, auto& x) { visit(s, x); });
}

template <class V>
void visit(V& v, ObstacleSettings& o) {
  v("count", o.count);
  v("pool_size", o.pool_size);
  v("pool_radius", o.pool_radius);
  v("radius_min", o.radius_min);
  v("radius_max", o.radius_max);
}

template <class V>
void visit(V& v, env::EnvConfig& e) {
  v("dt", e.dt);
  v("mass", e.mass);
  v("gravity", e.gravity);
  v("thrust_force", e.thrust_force);
  v("thrust_max", e.thrust_max);
  v("torque_max", e.torque_max);
  v("torque_gain", e.torque_gain);
  v("yaw_damping", e.yaw_damping);
  v("linear_drag", e.linear_drag);
  v("bird_radius", e.bird_radius);
  v("collision_min_speed", e.collision_min_speed);
  v("beak_offset", e.beak_offset);
  v("collect_radius", e.collect_radius);
  v("flower_height", e.flower_height);
  v("flower_ray_radius", e.flower_ray_radius);
  v("nectar_capacity", e.nectar_capacity);
  v("ray_range", e.ray_range);
  v("max_episode_steps", e.max_episode_steps);
  v("decision_period", e.decision_period);
  v("kill_plane_y", e.kill_plane_y);
  v("spawn_radius", e.spawn_radius);
  v("spawn_height", e.spawn_height);
  v("spawn_max_slope_deg", e.spawn_max_slope_deg);
  v("spawn_clearance", e.spawn_clearance);
  v("spawn_max_attempts", e.spawn_max_attempts);
}

template <class V>
void visit(V& v, env::RewardConfig& r) {
  v("base", r.base);
  v("radius_weight", r.radius_weight);
  v("congestion_weight", r.congestion_weight);
  v("collision_penalty", r.collision_penalty);
  v("nectar_reward", r.nectar_reward);
  v("target_congestion", r.target_congestion);
  v("fall_charges_remaining", r.fall_charges_remaining);
  v("fall_charge_discount", r.fall_charge_discount);
}

template <class V>
void visit(V& v, LayoutSettings& l) {
  v("r_min", l.ranges.r_min);
  v("r_max", l.ranges.r_max);
  v("initial_r", l.initial.r);
  v("initial_c", l.initial.c);
}

template <class V>
void visit(V& v, placement::PlacementConfig& p) {
  v("density", p.density);
  v("n_min", p.n_min);
  v("n_max", p.n_max);
  v("fixed_count", p.fixed_count);
  v("spacing_min", p.spacing_min);
  v("spacing_max", p.spacing_max);
  v("max_slope_deg", p.max_slope_deg);
  v("clearance", p.clearance);
  v("max_attempts", p.max_attempts);
}

template <class V>
void visit(V& v, placement::PenaltyWeights& w) {
  v("overlap", w.overlap);
  v("tilt", w.tilt);
  v("spacing", w.spacing);
  v("max_tilt_deg", w.max_tilt_deg);
  v("flower_radius", w.flower_radius);
}

template <class V>
void visit(V& v, placement::HillClimbConfig& h) {
  v("step_r", h.step_r);
  v("step_c", h.step_c);
  v("gate_per_flower", h.gate_per_flower);
  v("w_nectar", h.w_nectar);
  v("w_reward", h.w_reward);
  v("w_collision", h.w_collision);
  v("w_penalty", h.w_penalty);
}

template <class V>
void visit(V& v, ppo::NetworkConfig& n) {
  v("hidden", n.hidden);
  v("init_log_std", n.init_log_std);
  v("policy_output_gain", n.policy_output_gain);
  v("value_output_gain", n.value_output_gain);
}

template <class V>
void visit(V& v, ppo::PPOHyperparams& p) {
  v("n_envs", p.n_envs);
  v("buffer_size", p.buffer_size);
  v("batch_size", p.batch_size);
  v("learning_rate", p.learning_rate);
  v("entropy_coef", p.entropy_coef);
  v("clip", p.clip);
  v("gae_lambda", p.gae_lambda);
  v("gamma", p.gamma);
  v("epochs", p.epochs);
  v("value_coef", p.value_coef);
  v("max_grad_norm", p.max_grad_norm);
}

template <class V>
void visit_island_ppo(V& v, ppo::PPOHyperparams& p) {
  v("learning_rate", p.learning_rate);
  v("entropy_coef", p.entropy_coef);
  v("clip", p.clip);
  v("epochs", p.epochs);
  v("value_coef", p.value_coef);
  v("max_grad_norm", p.max_grad_norm);
}

template <class V>
void visit(V& v, IslandSettings& s) {
  v("mode", s.mode);
  v("obstacle_slots", s.obstacle_slots);
  v("penalty_scale", s.penalty_scale);
  v("episodes_per_update", s.episodes_per_update);
  v.section("scales", s.scales, [](auto& sub, placement::MetricScales& m) {
    sub("reward", m.reward);
    sub("nectar", m.nectar);
    sub("steps", m.steps);
    sub("collisions", m.collisions);
  });
  v.section("reward", s.reward, [](auto& sub, placement::IslandRewardWeights& w) {
    sub("nectar", w.nectar);
    sub("penalty", w.penalty);
    sub("collision", w.collision);
    sub("slow", w.slow);
  });
  v.section("ppo", s.ppo, [](auto& sub, auto& x) { visit_island_ppo(sub, x); });
  v.section("network", s.network, [](auto& sub, auto& x) { visit(sub, x); });
}

template <class V>
void visit(V& v, RunSettings& r) {
  v("total_timesteps", r.total_timesteps);
  v("max_episodes", r.max_episodes);
  v("checkpoint_every", r.checkpoint_every);
  v("trajectory_episodes", r.trajectory_episodes);
  v("observation_mask", r.observation_mask);
}

template <class V>
void visit(V& v, EvalSettings& e) {
  v("episodes", e.episodes);
  v("deterministic", e.deterministic);
}

template <class V>
void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  auto sec = [&v](const char* key, auto& value) {
    v.section(key, value, [](auto& s, auto& x) { visit(s, x); });
  };
  sec("terrain", c.terrain);
  sec("obstacles", c.obstacles);
  sec("environment", c.environment);
  sec("reward", c.reward);
  sec("layout", c.layout);
  sec("placement", c.placement);
  sec("penalty", c.penalty);
  sec("hill_climb", c.hill_climb);
  sec("island", c.island);
  sec("network", c.network);
  sec("ppo", c.ppo);
  sec("run", c.run);
  sec("eval", c.eval);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

env::RewardConfig effective_reward(const RunConfig& cfg) {
  env::RewardConfig r = cfg.reward;
  if (r.fall_charge_discount == 0.0) {
    r.fall_charge_discount = std::pow(cfg.ppo.gamma, 1.0 / cfg.environment.decision_period);
  }
  return r;
}

void validate(const RunConfig& c) {
  require(c.terrain.nx >= 2 && c.terrain.nz >= 2, "terrain: grid needs at least 2x2 nodes");
  require(c.terrain.cell_size > 0.0, "terrain.cell_size must be positive");
  require(c.terrain.noise.octaves >= 1, "terrain.noise.octaves must be >= 1");
  require(c.terrain.noise.amplitude >= 0.0, "terrain.noise.amplitude must be >= 0");

  require(c.obstacles.count >= 0, "obstacles.count must be >= 0");
  require(c.obstacles.pool_size >= c.obstacles.count, "obstacles.pool_size must be >= count");
  require(c.obstacles.radius_min > 0.0 && c.obstacles.radius_max >= c.obstacles.radius_min,
          "obstacles: need 0 < radius_min <= radius_max");
  require(c.obstacles.pool_radius >= 0.0, "obstacles.pool_radius must be >= 0");

  const auto& e = c.environment;
  require(e.dt > 0.0, "environment.dt must be positive");
  require(e.mass > 0.0, "environment.mass must be positive");
  require(e.max_episode_steps >= 1, "environment.max_episode_steps must be >= 1");
  require(e.decision_period >= 1, "environment.decision_period must be >= 1");
  require(e.collect_radius > 0.0 && e.bird_radius > 0.0, "environment: radii must be positive");
  require(e.nectar_capacity > 0.0, "environment.nectar_capacity must be positive");
  require(e.ray_range > 0.0, "environment.ray_range must be positive");
  require(e.spawn_max_attempts >= 1, "environment.spawn_max_attempts must be >= 1");
  require(c.reward.fall_charge_discount >= 0.0 && c.reward.fall_charge_discount <= 1.0,
          "reward.fall_charge_discount must be in [0, 1]");

  require(c.layout.ranges.r_min > 0.0 && c.layout.ranges.r_max > c.layout.ranges.r_min,
          "layout: need 0 < r_min < r_max");
  require(c.layout.initial.r >= c.layout.ranges.r_min && c.layout.initial.r <= c.layout.ranges.r_max,
          "layout.initial_r outside [r_min, r_max]");
  require(c.layout.initial.c >= 0.0 && c.layout.initial.c <= 1.0, "layout.initial_c outside [0, 1]");

  const auto& p = c.placement;
  require(p.n_min >= 1 && p.n_max >= p.n_min, "placement: need 1 <= n_min <= n_max");
  require(p.fixed_count >= 0, "placement.fixed_count must be >= 0");
  require(p.density >= 0.0, "placement.density must be >= 0");
  require(p.spacing_min > 0.0 && p.spacing_max >= p.spacing_min,
          "placement: need 0 < spacing_min <= spacing_max");
  require(p.max_attempts >= 1, "placement.max_attempts must be >= 1");
  if (c.penalty.spacing > 0.0) {
    const int smallest = p.fixed_count > 0 ? p.fixed_count : p.n_min;
    require(smallest >= 2, "placement: layouts need >= 2 flowers when penalty.spacing > 0");
  }

  const auto& w = c.penalty;
  require(w.overlap >= 0.0 && w.tilt >= 0.0 && w.spacing >= 0.0, "penalty weights must be >= 0");
  require(w.max_tilt_deg > 0.0 && w.max_tilt_deg < 90.0, "penalty.max_tilt_deg must be in (0, 90)");

  require(c.hill_climb.step_r >= 0.0 && c.hill_climb.step_c >= 0.0, "hill_climb steps must be >= 0");
  require(c.hill_climb.gate_per_flower >= 0.0, "hill_climb.gate_per_flower must be >= 0");

  require(c.island.obstacle_slots >= c.obstacles.count,
          "island.obstacle_slots must be >= obstacles.count");
  require(c.island.episodes_per_update >= 1, "island.episodes_per_update must be >= 1");
  require(c.island.penalty_scale > 0.0, "island.penalty_scale must be positive");

  require(!c.network.hidden.empty(), "network.hidden must list at least one layer");
  for (int h : c.network.hidden) require(h >= 1, "network.hidden sizes must be >= 1");
  require(!c.island.network.hidden.empty(), "island.network.hidden must list at least one layer");

  try {
    c.ppo.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  require(c.run.total_timesteps >=
              static_cast<long>(c.ppo.buffer_size) * c.environment.decision_period,
          "run.total_timesteps must cover one rollout (ppo.buffer_size * decision_period)");
  require(c.run.max_episodes >= 0, "run.max_episodes must be >= 0");
  require(c.run.checkpoint_every >= 0, "run.checkpoint_every must be >= 0");
  require(c.eval.episodes >= 1, "eval.episodes must be >= 1");
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  Reader reader(j, "config");
  visit(reader, cfg);
  reader.finish();
  validate(cfg);
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json j;
  RunConfig copy = cfg;
  Writer writer(j);
  visit(writer, copy);
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace coadapt
