#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "coadapt/config.hpp"
#include "coadapt/placement.hpp"
#include "coadapt/ppo.hpp"

namespace coadapt {

inline constexpr const char* kCheckpointFormat = "coadapt-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IslandSnapshot {
  IslandMode mode = IslandMode::heuristic;
  LayoutParams current;                  // params for the next episode
  placement::HillClimbState hill_climb;
  std::optional<ppo::ActorCritic> policy;  // learned mode only
  std::optional<EpisodeMetrics> previous;
};

struct Checkpoint {
  RunConfig config;
  ppo::ActorCritic solver;
  IslandSnapshot island;
  long timesteps = 0;
  long episodes = 0;
  long updates = 0;
};

// JSON keeps every double at round-trip precision, so save -> load is
// bit-exact. Non-finite scores are stored as null.
nlohmann::json actor_critic_to_json(const ppo::ActorCritic& ac);
ppo::ActorCritic actor_critic_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ck);
// Throws CheckpointError on a foreign format or version mismatch.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coadapt
