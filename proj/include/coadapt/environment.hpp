#pragma once

#include <array>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "coadapt/rng.hpp"
#include "coadapt/terrain.hpp"
#include "coadapt/types.hpp"

namespace coadapt::env {

using Quat = Eigen::Quaterniond;

struct EnvConfig {
  double dt = 0.02;
  double mass = 1.0;
  double gravity = 9.81;
  double thrust_force = 20.0;  // force at unit thrust command
  double thrust_max = 1.0;     // magnitude clamp on the thrust command
  double torque_max = 1.0;
  double torque_gain = 6.0;    // yaw acceleration per unit torque
  double yaw_damping = 3.0;
  double linear_drag = 2.0;
  double bird_radius = 0.2;
  double collision_min_speed = 0.5;  // inward normal speed for a contact to count
  double beak_offset = 0.15;   // beak point ahead of the body center
  double collect_radius = 0.6;
  double flower_height = 0.4;  // flower head above the terrain
  double flower_ray_radius = 0.25;
  double nectar_capacity = 1.0;
  double ray_range = 20.0;
  int max_episode_steps = 3000;
  int decision_period = 1;     // physics steps each policy action is held for
  double kill_plane_y = -10.0;
  double spawn_radius = 5.0;
  double spawn_height = 1.5;
  double spawn_max_slope_deg = 45.0;
  double spawn_clearance = 0.5;
  int spawn_max_attempts = terrain::kDefaultMaxAttempts;
};

struct RewardConfig {
  double base = -0.001;          // R_base per step
  double radius_weight = 0.01;   // alpha
  double congestion_weight = 0.05;  // beta
  double collision_penalty = 0.5;   // gamma
  double nectar_reward = 1.0;       // delta
  double target_congestion = 0.5;   // c*
  // Falling off also charges the per-step baseline for every step left,
  // discounted per physics step (1 charges the plain sum).
  bool fall_charges_remaining = true;
  double fall_charge_discount = 1.0;
};

struct BirdState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  double yaw_rate = 0.0;

  Vec3 forward() const { return orientation * Vec3::UnitZ(); }
};

struct Flower {
  Vec3 position;  // collectible head
  double nectar_remaining = 1.0;
  double collect_radius = 0.6;

  bool has_nectar() const { return nectar_remaining > 0.0; }
};

struct Action {
  Vec3 thrust = Vec3::Zero();
  double yaw_torque = 0.0;

  static Action from(std::span<const double> a);
};

inline constexpr int kActionDim = 4;

struct StepEvents {
  int nectar_collected = 0;
  bool collided = false;
  bool fell_off = false;
  bool episode_done = false;
};

struct EnvState {
  BirdState bird;
  std::vector<Flower> flowers;
  std::vector<terrain::Obstacle> obstacles;
  std::shared_ptr<const terrain::Heightmap> heightmap;
  LayoutParams params;
  int step_count = 0;
  bool in_contact = false;
  bool terminal = false;
  double nectar_collected = 0.0;

  double nectar_remaining() const;
};

struct BirdStart {
  Vec3 position = Vec3::Zero();  // already lifted by spawn_height
  double yaw = 0.0;
};

// Spawn disk around the island center, clear of obstacles, random heading.
// Throws std::runtime_error when max attempts are exhausted.
BirdStart sample_bird_start(const terrain::Heightmap& hm,
                            std::span<const terrain::Obstacle> obstacles, Rng& spawn_rng,
                            const EnvConfig& cfg);

// Deterministic reset from an explicit start; flowers are refilled.
EnvState reset_at(std::shared_ptr<const terrain::Heightmap> heightmap,
                  std::vector<terrain::Obstacle> obstacles, std::span<const Vec3> flower_bases,
                  const LayoutParams& params, const BirdStart& start, const EnvConfig& cfg);

/// Places the bird at a valid random position (spawn disk around the island
/// center, lifted by spawn_height) with zero velocity, upright with a random
/// heading, and refills every flower. Throws std::runtime_error if no valid
/// spawn exists.
EnvState reset(std::shared_ptr<const terrain::Heightmap> heightmap,
               std::vector<terrain::Obstacle> obstacles, std::span<const Vec3> flower_bases,
               const LayoutParams& params, Rng& spawn_rng, const EnvConfig& cfg);

Action clamp_action(const Action& action, const EnvConfig& cfg);

double compute_reward(const StepEvents& events, const LayoutParams& params,
                      const RewardConfig& cfg, const LayoutRanges& ranges);

struct StepResult {
  double reward = 0.0;
  StepEvents events;
};

/// One semi-implicit Euler step. Throws std::logic_error on a terminal state.
StepResult step(EnvState& state, const Action& action, const EnvConfig& cfg,
                const RewardConfig& reward_cfg, const LayoutRanges& ranges);

struct NearestFlower {
  int index = -1;               // -1 when no flower has nectar left
  Vec3 relative = Vec3::Zero(); // flower head minus query point
};

NearestFlower nearest_flower(const Vec3& position, std::span<const Flower> flowers);

Vec3 beak_position(const BirdState& bird, const EnvConfig& cfg);

// Slot layout of the 24-dim observation.
namespace obs_layout {
inline constexpr int kRays = 0;        // 9: {forward, up, down} x {flower, obstacle, terrain}
inline constexpr int kFlower = 9;      // 3: nearest flower, bird frame
inline constexpr int kVelocity = 12;   // 3: velocity, bird frame
inline constexpr int kRotation = 15;   // 4: quaternion (w, x, y, z)
inline constexpr int kNormal = 19;     // 3: surface normal below the bird
inline constexpr int kRadius = 22;     // 1: r normalized to [0, 1]
inline constexpr int kCongestion = 23; // 1: c
inline constexpr int kSize = 24;
}  // namespace obs_layout

using Observation = std::array<double, obs_layout::kSize>;

/// Per-direction, per-tag nearest hit distance divided by ray_range; 1.0
/// when the tag is not hit within range. Only flowers with nectar are seen.
std::array<double, 9> ray_perception(const EnvState& state, const EnvConfig& cfg);

Observation build_observation(const EnvState& state, const EnvConfig& cfg,
                              const LayoutRanges& ranges);

enum class ObservationMask { full, no_normals, no_rays, no_params };

ObservationMask parse_mask(std::string_view name);
const char* to_string(ObservationMask mask);

// Zeroes the masked observation group in place; the dimension is unchanged.
void apply_mask(std::span<double> obs, ObservationMask mask);

struct StepRecord {
  double reward = 0.0;
  StepEvents events;
};

/// m1 = mean reward, m2 = nectar collected, m3 = index of the first
/// collecting step (max_episode_steps if none), m4 = collision count.
/// Throws std::invalid_argument on an empty trace.
EpisodeMetrics episode_metrics(std::span<const StepRecord> trace, int max_episode_steps);

/// Line-delimited JSON trajectory dump, one object per step.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& out) : out_(out) {}
  void write(int episode, const EnvState& state, std::span<const double> action,
             const StepResult& result, std::span<const double> observation);

 private:
  std::ostream& out_;
};

}  // namespace coadapt::env
