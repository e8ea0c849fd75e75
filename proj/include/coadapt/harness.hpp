#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coadapt/checkpoint.hpp"
#include "coadapt/config.hpp"
#include "coadapt/environment.hpp"
#include "coadapt/placement.hpp"
#include "coadapt/ppo.hpp"

namespace coadapt::harness {

// Terrain and obstacle pool shared by every environment of a run.
struct World {
  std::shared_ptr<const terrain::Heightmap> heightmap;
  std::vector<Vec3> obstacle_pool;
  std::vector<double> obstacle_radii;
  Vec3 center = Vec3::Zero();  // island center, on the terrain surface
};

World make_world(const RunConfig& cfg, std::uint64_t seed);

// What the island controller handed out for one episode.
struct Proposal {
  LayoutParams params;
  Eigen::VectorXd observation;  // learned mode: normalized island observation
  Eigen::VectorXd raw_action;
  double log_prob = 0.0;
  double value = 0.0;
};

struct IslandFeedback {
  LayoutParams next;
  double score = 0.0;           // heuristic score, or island reward in learned mode
  double gate = 0.0;
  bool gated = false;
  bool accepted = false;
};

/// The co-adaptive generator. One instance per run; all environments talk to
/// it from the single collection thread, so proposals and feedback are
/// applied in a fixed order.
class IslandController {
 public:
  IslandController(const RunConfig& cfg, std::uint64_t seed);
  explicit IslandController(const RunConfig& cfg, IslandSnapshot snapshot, std::uint64_t seed);

  IslandMode mode() const { return mode_; }
  LayoutParams current() const { return current_; }

  Proposal propose(std::span<const terrain::Obstacle> obstacles, const Vec3& island_center,
                   const Vec3& bird_start);
  IslandFeedback feedback(const Proposal& proposal, const EpisodeMetrics& metrics,
                          double layout_penalty, int n_flowers);

  IslandSnapshot snapshot() const;
  long island_updates() const { return island_updates_; }

 private:
  const RunConfig* cfg_;
  IslandMode mode_;
  LayoutParams current_;
  placement::HillClimbState hill_;
  std::optional<ppo::ActorCritic> policy_;
  std::optional<EpisodeMetrics> previous_;
  std::vector<ppo::IslandTransition> pending_;
  Rng rng_;
  long island_updates_ = 0;
};

struct EpisodeRecord {
  long episode = 0;
  int env = 0;
  double r = 0.0;
  double c = 0.0;
  int n_requested = 0;
  int n_flowers = 0;
  double p_total = 0.0;
  EpisodeMetrics metrics;
  int steps = 0;
  double total_reward = 0.0;
  bool success = false;
  IslandFeedback island;
};

// Environment adapter: each reset asks the island controller for (r, c),
// spawns a layout and starts a bird episode; each finished episode reports
// its metrics back.
class CoadaptiveEnv : public ppo::Environment {
 public:
  using EpisodeSink = std::function<void(const EpisodeRecord&)>;

  CoadaptiveEnv(const RunConfig& cfg, std::shared_ptr<const World> world,
                IslandController* controller, Rng rng, int env_index, EpisodeSink sink);

  int observation_dim() const override { return env::obs_layout::kSize; }
  int action_dim() const override { return env::kActionDim; }
  Eigen::VectorXd reset() override;
  ppo::Transition step(const Eigen::VectorXd& action) override;

  const env::EnvState& state() const { return state_; }
  const placement::Layout& layout() const { return layout_; }
  double penalty() const { return penalty_; }
  long physics_steps() const { return physics_steps_; }
  void set_trajectory_writer(env::TrajectoryWriter* writer, int max_episodes);

 private:
  Eigen::VectorXd observe() const;

  const RunConfig* cfg_;
  std::shared_ptr<const World> world_;
  IslandController* controller_;
  Rng rng_;
  int env_index_;
  EpisodeSink sink_;
  env::RewardConfig reward_;
  env::EnvState state_;
  placement::Layout layout_;
  Proposal proposal_;
  double penalty_ = 0.0;
  std::vector<env::StepRecord> trace_;
  double episode_reward_ = 0.0;
  int episodes_started_ = 0;
  long physics_steps_ = 0;
  env::TrajectoryWriter* writer_ = nullptr;
  int trajectory_episodes_ = 0;
};

// Layout penalty with mu_d taken from the layout's congestion. A singleton
// layout has no nearest neighbour, so its spacing term is skipped.
double layout_penalty(const RunConfig& cfg, const World& world, const placement::Layout& layout,
                      std::span<const terrain::Obstacle> obstacles);

// ---------------------------------------------------------------------------
// Evaluation.

enum class PolicyKind { trained, random };

struct EvalEpisode {
  int episode = 0;
  double r = 0.0;
  double c = 0.0;
  int n_flowers = 0;
  double nectar = 0.0;
  bool success = false;
  int steps = 0;                 // episode duration
  double time_to_first = 0.0;    // m3
  int collisions = 0;
  double reward_per_step = 0.0;  // m1
  double p_total = 0.0;
};

struct EvalAggregate {
  int episodes = 0;
  double nectar_mean = 0.0;
  double nectar_std = 0.0;
  double success_rate = 0.0;
  double duration_mean = 0.0;
  double duration_std = 0.0;
  double time_to_first_mean = 0.0;
  double time_to_first_std = 0.0;
  double collisions_mean = 0.0;
  double collisions_std = 0.0;
  double reward_per_step_mean = 0.0;
  double reward_per_step_std = 0.0;
};

struct EvalReport {
  std::vector<EvalEpisode> episodes;
  EvalAggregate aggregate;
};

EvalAggregate aggregate(std::span<const EvalEpisode> episodes);

struct EvalOptions {
  int episodes = 100;
  std::uint64_t seed = 1;
  bool deterministic = true;
  PolicyKind policy = PolicyKind::trained;
  env::ObservationMask mask = env::ObservationMask::full;
};

/// Fresh layouts at fixed `params`, frozen policy and normalizer. The world
/// (terrain, obstacle pool) comes from cfg.seed; layouts, obstacle draws,
/// spawns and random actions come from opts.seed, one stream per episode.
EvalReport evaluate(const ppo::ActorCritic& ac, const RunConfig& cfg, const LayoutParams& params,
                    const EvalOptions& opts);

// ---------------------------------------------------------------------------
// Commands. Every output file is a pure function of the inputs.

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<EpisodeRecord> episodes;
  std::vector<ppo::UpdateStats> updates;
};

struct TrainHooks {
  // Called after each PPO update with the update index (1-based).
  std::function<void(long, const ppo::UpdateStats&)> on_update;
};

TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                      const TrainHooks& hooks = {});

// Evaluates at the checkpoint's current island params. PolicyKind::random
// replaces the policy with uniform actions in [-1, 1]^4 (baseline).
EvalReport cmd_eval(const Checkpoint& ck, int episodes, std::uint64_t seed,
                    const std::filesystem::path& out_dir, PolicyKind policy = PolicyKind::trained);

struct AblationRow {
  env::ObservationMask variant;
  EvalAggregate aggregate;
};

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg,
                                    std::span<const env::ObservationMask> variants,
                                    const std::filesystem::path& out_dir);

struct GridCell {
  double r = 0.0;
  double c = 0.0;
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
  std::vector<double> values;  // per-episode nectar
};

std::vector<GridCell> cmd_grid(const Checkpoint& ck, std::span<const double> r_values,
                               std::span<const double> c_values, int episodes_per_cell,
                               std::uint64_t seed, const std::filesystem::path& out_dir);

// CSV schemas (column order is part of the format, see docs/formats.md).
extern const char* const kUpdatesHeader;
extern const char* const kEpisodesHeader;
extern const char* const kEvalHeader;
extern const char* const kAblationHeader;
extern const char* const kGridHeader;

nlohmann::json aggregate_to_json(const EvalAggregate& agg);

}  // namespace coadapt::harness
