#include "coadapt/placement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coadapt::placement {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
}  // namespace

int flower_count(const LayoutParams& params, const PlacementConfig& cfg) {
  if (cfg.fixed_count > 0) return cfg.fixed_count;
  const long n = std::lround(cfg.density * params.c * params.r * params.r);
  return static_cast<int>(std::clamp<long>(n, cfg.n_min, cfg.n_max));
}

double target_spacing(double c, const PlacementConfig& cfg) {
  return (1.0 - c) * cfg.spacing_max + c * cfg.spacing_min;
}

Layout spawn_layout(const terrain::Heightmap& hm, std::span<const terrain::Obstacle> obstacles,
                    const LayoutParams& params, const Vec3& center, Rng& rng,
                    const PlacementConfig& cfg) {
  Layout layout;
  layout.center = center;
  layout.params = params;
  layout.requested = flower_count(params, cfg);
  layout.flowers.reserve(layout.requested);
  const double max_slope = cfg.max_slope_deg * kDegToRad;
  for (int i = 0; i < layout.requested; ++i) {
    auto p = terrain::sample_valid_position(hm, obstacles, center, params.r, max_slope,
                                            cfg.clearance, rng, cfg.max_attempts);
    if (p) layout.flowers.push_back(*p);
  }
  layout.incomplete = static_cast<int>(layout.flowers.size()) < layout.requested;
  if (layout.flowers.empty()) {
    throw std::runtime_error("spawn_layout: no valid flower position inside the spawn disk");
  }
  return layout;
}

double nearest_neighbor_distance(std::span<const Vec3> flowers, std::size_t i) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < flowers.size(); ++j) {
    if (j == i) continue;
    best = std::min(best, (flowers[j] - flowers[i]).norm());
  }
  return best;
}

PenaltyTerms penalty_terms(std::size_t i, const Layout& layout, const terrain::Heightmap& hm,
                           std::span<const terrain::Obstacle> obstacles,
                           const PenaltyWeights& w) {
  if (i >= layout.flowers.size()) throw std::out_of_range("flower index out of range");
  const Vec3& f = layout.flowers[i];
  PenaltyTerms t;
  t.overlap = std::any_of(obstacles.begin(), obstacles.end(), [&](const terrain::Obstacle& o) {
    return (f - o.center).norm() < o.radius + w.flower_radius;
  });
  t.tilted = terrain::slope_angle(hm, f.x(), f.z()) > w.max_tilt_deg * kDegToRad;
  if (layout.flowers.size() >= 2) {
    t.nearest_distance = nearest_neighbor_distance(layout.flowers, i);
    t.spacing_error = std::abs(t.nearest_distance - w.target_spacing);
  } else if (w.spacing > 0.0) {
    throw std::invalid_argument(
        "placement_penalty: spacing term undefined for a single-flower layout");
  }
  t.total = w.overlap * (t.overlap ? 1.0 : 0.0) + w.tilt * (t.tilted ? 1.0 : 0.0) +
            w.spacing * t.spacing_error;
  return t;
}

double placement_penalty(std::size_t i, const Layout& layout, const terrain::Heightmap& hm,
                         std::span<const terrain::Obstacle> obstacles, const PenaltyWeights& w) {
  return penalty_terms(i, layout, hm, obstacles, w).total;
}

double total_penalty(const Layout& layout, const terrain::Heightmap& hm,
                     std::span<const terrain::Obstacle> obstacles, const PenaltyWeights& w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < layout.flowers.size(); ++i) {
    sum += placement_penalty(i, layout, hm, obstacles, w);
  }
  return sum;
}

PenaltyWeights weights_for(const Layout& layout, const PenaltyWeights& base,
                           const PlacementConfig& cfg) {
  PenaltyWeights w = base;
  w.target_spacing = target_spacing(layout.params.c, cfg);
  return w;
}

nlohmann::json layout_to_json(const Layout& layout, const terrain::Heightmap& hm,
                              std::span<const terrain::Obstacle> obstacles,
                              const PenaltyWeights& w) {
  nlohmann::json flowers = nlohmann::json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < layout.flowers.size(); ++i) {
    const PenaltyTerms t = penalty_terms(i, layout, hm, obstacles, w);
    total += t.total;
    flowers.push_back({{"position", vec_json(layout.flowers[i])},
                       {"overlap", t.overlap},
                       {"tilted", t.tilted},
                       {"nearest_distance", t.nearest_distance},
                       {"spacing_error", t.spacing_error},
                       {"penalty", t.total}});
  }
  return {{"center", vec_json(layout.center)},
          {"params", {{"r", layout.params.r}, {"c", layout.params.c}}},
          {"requested", layout.requested},
          {"incomplete", layout.incomplete},
          {"target_spacing", w.target_spacing},
          {"flowers", flowers},
          {"total_penalty", total}};
}

double hill_climb_score(const EpisodeMetrics& feedback, double layout_penalty,
                        const HillClimbConfig& cfg) {
  return cfg.w_nectar * feedback.m2 + cfg.w_reward * feedback.m1 -
         cfg.w_collision * feedback.m4 - cfg.w_penalty * layout_penalty;
}

HillClimbDecision hill_climb_update(HillClimbState& state, const LayoutParams& evaluated,
                                    const EpisodeMetrics& feedback, double layout_penalty,
                                    int n_flowers, Rng& rng, const HillClimbConfig& cfg,
                                    const LayoutRanges& ranges) {
  HillClimbDecision d;
  d.evaluated = evaluated;
  d.score = hill_climb_score(feedback, layout_penalty, cfg);
  d.gate = cfg.gate_per_flower * n_flowers;
  d.gated = layout_penalty > d.gate;
  d.accepted = !d.gated && d.score >= state.base_score;
  if (d.accepted) {
    state.base = ranges.clip(evaluated);
    state.base_score = d.score;
  }
  LayoutParams proposal = state.base;
  proposal.r += uniform(rng, -cfg.step_r, cfg.step_r);
  proposal.c += uniform(rng, -cfg.step_c, cfg.step_c);
  d.next = ranges.clip(proposal);
  return d;
}

NormalizedMetrics normalize_metrics(const EpisodeMetrics& m, const MetricScales& s) {
  NormalizedMetrics n;
  n.m1 = std::clamp(m.m1, -s.reward, s.reward) / s.reward;
  n.m2 = std::max(0.0, m.m2) / s.nectar;
  n.m3 = std::clamp(m.m3 / s.steps, 0.0, 1.0);
  n.m4 = std::min(1.0, std::max(0.0, m.m4) / s.collisions);
  return n;
}

Eigen::VectorXd island_observe(std::span<const terrain::Obstacle> obstacles,
                               const Vec3& island_center, const Vec3& bird_start,
                               const std::optional<EpisodeMetrics>& prev, int capacity,
                               const MetricScales& scales) {
  if (capacity < 0) throw std::invalid_argument("island observation capacity must be >= 0");
  if (obstacles.size() > static_cast<std::size_t>(capacity)) {
    throw std::invalid_argument("island_observe: more obstacles than observation slots");
  }
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(island_observation_dim(capacity));
  for (std::size_t k = 0; k < obstacles.size(); ++k) {
    obs.segment<3>(3 * k) = obstacles[k].center - island_center;
  }
  const int base = 3 * capacity;
  obs.segment<3>(base) = bird_start - island_center;
  if (prev) {
    const NormalizedMetrics n = normalize_metrics(*prev, scales);
    obs[base + 3] = n.m1;
    obs[base + 4] = n.m2;
    obs[base + 5] = n.m3;
    obs[base + 6] = n.m4;
  }
  return obs;
}

double island_reward(const NormalizedMetrics& feedback, double penalty_norm,
                     const IslandRewardWeights& w) {
  return w.nectar * feedback.m2 - w.penalty * penalty_norm - w.collision * feedback.m4 -
         w.slow * feedback.m3;
}

}  // namespace coadapt::placement
