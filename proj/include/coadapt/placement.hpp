#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "coadapt/rng.hpp"
#include "coadapt/terrain.hpp"
#include "coadapt/types.hpp"

namespace coadapt::placement {

struct PlacementConfig {
  double density = 0.2;        // k_n in n = round(k_n * c * r^2)
  int n_min = 3;
  int n_max = 30;
  int fixed_count = 0;         // > 0 overrides the density law
  double spacing_min = 1.0;    // target spacing at c = 1
  double spacing_max = 4.0;    // target spacing at c = 0
  double max_slope_deg = 40.0; // spawn validity (looser than the tilt penalty)
  double clearance = 0.0;      // spawn clearance from obstacle surfaces
  int max_attempts = terrain::kDefaultMaxAttempts;
};

int flower_count(const LayoutParams& params, const PlacementConfig& cfg);

// Target nearest-neighbour spacing: dense layouts (high c) aim for tight spacing.
double target_spacing(double c, const PlacementConfig& cfg);

struct Layout {
  std::vector<Vec3> flowers;  // flower bases, on the terrain surface
  Vec3 center = Vec3::Zero();
  LayoutParams params;
  int requested = 0;          // n from flower_count
  bool incomplete = false;    // some samples were rejected and dropped
};

/// Draws flower_count(params) positions uniformly in the disk of radius
/// params.r around `center`. Throws std::runtime_error if nothing could be
/// placed.
Layout spawn_layout(const terrain::Heightmap& hm, std::span<const terrain::Obstacle> obstacles,
                    const LayoutParams& params, const Vec3& center, Rng& rng,
                    const PlacementConfig& cfg);

struct PenaltyWeights {
  double overlap = 1.0;        // lambda_1
  double tilt = 1.0;           // lambda_2
  double spacing = 0.25;       // lambda_3
  double max_tilt_deg = 20.0;  // theta_max
  double flower_radius = 0.25; // footprint used by the overlap indicator
  double target_spacing = 2.5; // mu_d, normally target_spacing(c)
};

struct PenaltyTerms {
  bool overlap = false;
  bool tilted = false;
  double nearest_distance = 0.0;
  double spacing_error = 0.0;  // |d_i - mu_d|
  double total = 0.0;
};

// Brute-force nearest neighbour distance of flower i within the layout.
double nearest_neighbor_distance(std::span<const Vec3> flowers, std::size_t i);

PenaltyTerms penalty_terms(std::size_t i, const Layout& layout, const terrain::Heightmap& hm,
                           std::span<const terrain::Obstacle> obstacles,
                           const PenaltyWeights& w);

double placement_penalty(std::size_t i, const Layout& layout, const terrain::Heightmap& hm,
                         std::span<const terrain::Obstacle> obstacles, const PenaltyWeights& w);

double total_penalty(const Layout& layout, const terrain::Heightmap& hm,
                     std::span<const terrain::Obstacle> obstacles, const PenaltyWeights& w);

// Weights for a concrete layout: copies `base` and fills mu_d from the
// layout's congestion.
PenaltyWeights weights_for(const Layout& layout, const PenaltyWeights& base,
                           const PlacementConfig& cfg);

// JSON record for one layout: center, params and a per-flower breakdown.
nlohmann::json layout_to_json(const Layout& layout, const terrain::Heightmap& hm,
                              std::span<const terrain::Obstacle> obstacles,
                              const PenaltyWeights& w);

// ---------------------------------------------------------------------------
// Hill-climbing island controller with penalty gating.

struct HillClimbConfig {
  double step_r = 0.5;
  double step_c = 0.05;
  double gate_per_flower = 0.5;  // P_gate = gate_per_flower * n
  double w_nectar = 1.0;
  double w_reward = 0.5;
  double w_collision = 0.2;
  double w_penalty = 0.1;
};

struct HillClimbState {
  LayoutParams base;
  double base_score = -std::numeric_limits<double>::infinity();
};

struct HillClimbDecision {
  LayoutParams evaluated;  // params the episode was played with
  LayoutParams next;       // params for the next episode
  double score = 0.0;
  double gate = 0.0;
  bool gated = false;      // penalty exceeded the gate
  bool accepted = false;   // evaluated params became the new base
};

double hill_climb_score(const EpisodeMetrics& feedback, double layout_penalty,
                        const HillClimbConfig& cfg);

/// Scores the episode played with `evaluated`. The evaluated params replace
/// the base only if the score is at least the base score and the penalty is
/// within the gate; otherwise the base is kept. The next proposal is the base
/// plus a uniform perturbation, clipped into range.
HillClimbDecision hill_climb_update(HillClimbState& state, const LayoutParams& evaluated,
                                    const EpisodeMetrics& feedback, double layout_penalty,
                                    int n_flowers, Rng& rng, const HillClimbConfig& cfg,
                                    const LayoutRanges& ranges);

// ---------------------------------------------------------------------------
// Learned island agent: observation and reward.

struct MetricScales {
  double reward = 1.0;       // m1 is clipped to [-reward, reward] then divided
  double nectar = 30.0;
  double steps = 3000.0;
  double collisions = 10.0;
};

struct NormalizedMetrics {
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

NormalizedMetrics normalize_metrics(const EpisodeMetrics& m, const MetricScales& s);

/// [K obstacle slots (relative to the island center, zero padded) | bird
/// start relative to center (3) | normalized m1..m4 (4)]. Throws if there
/// are more than K obstacles.
Eigen::VectorXd island_observe(std::span<const terrain::Obstacle> obstacles,
                               const Vec3& island_center, const Vec3& bird_start,
                               const std::optional<EpisodeMetrics>& prev, int capacity,
                               const MetricScales& scales);

inline int island_observation_dim(int capacity) { return 3 * capacity + 7; }

struct IslandRewardWeights {
  double nectar = 1.0;
  double penalty = 0.3;
  double collision = 0.2;
  double slow = 0.1;
};

double island_reward(const NormalizedMetrics& feedback, double penalty_norm,
                     const IslandRewardWeights& w);

}  // namespace coadapt::placement
