#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "coadapt/environment.hpp"
#include "coadapt/placement.hpp"
#include "coadapt/ppo.hpp"
#include "coadapt/terrain.hpp"
#include "coadapt/types.hpp"

namespace coadapt {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TerrainSettings {
  bool flat = false;
  int nx = 65;
  int nz = 65;
  double cell_size = 0.5;
  terrain::NoiseParams noise;
};

// Static obstacles: a pool of candidate positions is drawn once per run,
// and each episode shuffles `count` of them into play.
struct ObstacleSettings {
  int count = 6;
  int pool_size = 12;
  double pool_radius = 10.0;
  double radius_min = 0.4;
  double radius_max = 1.0;
};

struct LayoutSettings {
  LayoutRanges ranges;
  LayoutParams initial;
};

enum class IslandMode { heuristic, learned, fixed };

IslandMode parse_island_mode(const std::string& name);
const char* to_string(IslandMode mode);

struct IslandSettings {
  IslandMode mode = IslandMode::heuristic;
  int obstacle_slots = 16;                 // K
  placement::MetricScales scales;
  placement::IslandRewardWeights reward;
  double penalty_scale = 10.0;             // P_total / penalty_scale enters the reward
  int episodes_per_update = 16;
  ppo::PPOHyperparams ppo;                 // batch/buffer fields are ignored
  ppo::NetworkConfig network{{64, 64}, 0.0, 0.01, 1.0};
};

struct RunSettings {
  long total_timesteps = 200000;
  int max_episodes = 0;          // 0: no episode limit
  int checkpoint_every = 10;     // updates; 0 disables periodic checkpoints
  int trajectory_episodes = 0;   // episodes of env 0 dumped as JSONL
  env::ObservationMask observation_mask = env::ObservationMask::full;
};

struct EvalSettings {
  int episodes = 100;
  bool deterministic = true;
};

struct RunConfig {
  std::uint64_t seed = 1;
  TerrainSettings terrain;
  ObstacleSettings obstacles;
  env::EnvConfig environment;
  // fall_charge_discount 0 means: match the learner's discount per physics
  // step, gamma^(1 / decision_period). See effective_reward.
  env::RewardConfig reward{.fall_charge_discount = 0.0};
  LayoutSettings layout;
  placement::PlacementConfig placement;
  placement::PenaltyWeights penalty;
  placement::HillClimbConfig hill_climb;
  IslandSettings island;
  ppo::NetworkConfig network;
  ppo::PPOHyperparams ppo;
  RunSettings run;
  EvalSettings eval;
};

// Missing keys keep their defaults; unknown keys and invalid values throw
// ConfigError naming the offending key.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

void validate(const RunConfig& cfg);

// cfg.reward with the automatic fall charge discount resolved.
env::RewardConfig effective_reward(const RunConfig& cfg);

}  // namespace coadapt
