#include "coadapt/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace coadapt::env {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// Contact resolution: push the sphere out along the normal and remove the
// inward velocity. `impact` accumulates the largest inward normal speed.
bool resolve_terrain(BirdState& bird, const terrain::Heightmap& hm, double radius,
                     double& impact) {
  const Vec3& p = bird.position;
  if (!hm.contains(p.x(), p.z())) return false;
  const double ground = terrain::height_at(hm, p.x(), p.z());
  if (p.y() - radius >= ground) return false;
  const Vec3 n = terrain::surface_normal(hm, p.x(), p.z());
  bird.position.y() = ground + radius;
  const double vn = bird.velocity.dot(n);
  if (vn < 0.0) {
    bird.velocity -= vn * n;
    impact = std::max(impact, -vn);
  }
  return true;
}

bool resolve_obstacles(BirdState& bird, std::span<const terrain::Obstacle> obstacles,
                       double radius, double& impact) {
  bool contact = false;
  for (const auto& o : obstacles) {
    const Vec3 d = bird.position - o.center;
    const double dist = d.norm();
    const double min_dist = o.radius + radius;
    if (dist >= min_dist) continue;
    const Vec3 n = dist > 1e-12 ? Vec3(d / dist) : Vec3(Vec3::UnitY());
    bird.position = o.center + min_dist * n;
    const double vn = bird.velocity.dot(n);
    if (vn < 0.0) {
      bird.velocity -= vn * n;
      impact = std::max(impact, -vn);
    }
    contact = true;
  }
  return contact;
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
}  // namespace

double EnvState::nectar_remaining() const {
  double sum = 0.0;
  for (const auto& f : flowers) sum += f.nectar_remaining;
  return sum;
}

Action Action::from(std::span<const double> a) {
  if (a.size() != static_cast<std::size_t>(kActionDim)) {
    throw std::invalid_argument("action must have 4 components");
  }
  Action out;
  out.thrust = Vec3(a[0], a[1], a[2]);
  out.yaw_torque = a[3];
  return out;
}

BirdStart sample_bird_start(const terrain::Heightmap& hm,
                            std::span<const terrain::Obstacle> obstacles, Rng& spawn_rng,
                            const EnvConfig& cfg) {
  const Vec3 center(hm.center_x(), 0.0, hm.center_z());
  auto spawn = terrain::sample_valid_position(
      hm, obstacles, center, cfg.spawn_radius, cfg.spawn_max_slope_deg * kDegToRad,
      cfg.spawn_clearance + cfg.bird_radius, spawn_rng, cfg.spawn_max_attempts);
  if (!spawn) throw std::runtime_error("reset: no valid bird spawn position");
  BirdStart start;
  start.position = *spawn + Vec3(0.0, cfg.spawn_height, 0.0);
  start.yaw = uniform(spawn_rng, -kPi, kPi);
  return start;
}

EnvState reset_at(std::shared_ptr<const terrain::Heightmap> heightmap,
                  std::vector<terrain::Obstacle> obstacles, std::span<const Vec3> flower_bases,
                  const LayoutParams& params, const BirdStart& start, const EnvConfig& cfg) {
  if (!heightmap) throw std::invalid_argument("reset: missing heightmap");
  if (flower_bases.empty()) throw std::invalid_argument("reset: flower layout is empty");

  EnvState s;
  s.heightmap = std::move(heightmap);
  s.obstacles = std::move(obstacles);
  s.params = params;
  s.bird.position = start.position;
  s.bird.velocity.setZero();
  s.bird.yaw_rate = 0.0;
  s.bird.orientation = Quat(Eigen::AngleAxisd(start.yaw, Vec3::UnitY()));
  s.flowers.reserve(flower_bases.size());
  for (const auto& base : flower_bases) {
    s.flowers.push_back(Flower{base + Vec3(0.0, cfg.flower_height, 0.0), cfg.nectar_capacity,
                               cfg.collect_radius});
  }
  return s;
}

EnvState reset(std::shared_ptr<const terrain::Heightmap> heightmap,
               std::vector<terrain::Obstacle> obstacles, std::span<const Vec3> flower_bases,
               const LayoutParams& params, Rng& spawn_rng, const EnvConfig& cfg) {
  if (!heightmap) throw std::invalid_argument("reset: missing heightmap");
  if (flower_bases.empty()) throw std::invalid_argument("reset: flower layout is empty");
  const BirdStart start = sample_bird_start(*heightmap, obstacles, spawn_rng, cfg);
  return reset_at(std::move(heightmap), std::move(obstacles), flower_bases, params, start, cfg);
}

Action clamp_action(const Action& action, const EnvConfig& cfg) {
  Action out = action;
  const double mag = out.thrust.norm();
  if (mag > cfg.thrust_max) out.thrust *= cfg.thrust_max / mag;
  out.yaw_torque = std::clamp(out.yaw_torque, -cfg.torque_max, cfg.torque_max);
  return out;
}

double compute_reward(const StepEvents& events, const LayoutParams& params,
                      const RewardConfig& cfg, const LayoutRanges& ranges) {
  const double f_radius = -ranges.normalized_radius(params.r);
  const double f_congestion = -std::abs(params.c - cfg.target_congestion);
  double r = cfg.base + cfg.radius_weight * f_radius + cfg.congestion_weight * f_congestion;
  if (events.collided) r -= cfg.collision_penalty;
  r += cfg.nectar_reward * events.nectar_collected;
  return r;
}

Vec3 beak_position(const BirdState& bird, const EnvConfig& cfg) {
  return bird.position + cfg.beak_offset * bird.forward();
}

StepResult step(EnvState& state, const Action& action, const EnvConfig& cfg,
                const RewardConfig& reward_cfg, const LayoutRanges& ranges) {
  if (state.terminal) throw std::logic_error("step called on a terminal episode");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("step: dt must be positive");

  const Action a = clamp_action(action, cfg);
  BirdState& bird = state.bird;

  const Vec3 thrust_world = bird.orientation * (a.thrust * cfg.thrust_force);
  const Vec3 accel = thrust_world / cfg.mass + Vec3(0.0, -cfg.gravity, 0.0) -
                     cfg.linear_drag * bird.velocity;
  bird.velocity += accel * cfg.dt;
  bird.yaw_rate += (a.yaw_torque * cfg.torque_gain - cfg.yaw_damping * bird.yaw_rate) * cfg.dt;
  bird.orientation =
      (bird.orientation * Quat(Eigen::AngleAxisd(bird.yaw_rate * cfg.dt, Vec3::UnitY())))
          .normalized();
  bird.position += bird.velocity * cfg.dt;

  double impact = 0.0;
  bool contact = resolve_terrain(bird, *state.heightmap, cfg.bird_radius, impact);
  contact = resolve_obstacles(bird, state.obstacles, cfg.bird_radius, impact) || contact;

  StepEvents ev;
  // A new contact counts as a collision only if it hits hard enough; resting
  // and sliding contacts (and touchdowns slower than the threshold) do not.
  ev.collided = contact && !state.in_contact && impact >= cfg.collision_min_speed;
  state.in_contact = contact;

  const Vec3 beak = beak_position(bird, cfg);
  for (auto& f : state.flowers) {
    if (f.has_nectar() && (beak - f.position).norm() <= f.collect_radius) {
      state.nectar_collected += f.nectar_remaining;
      f.nectar_remaining = 0.0;
      ++ev.nectar_collected;
    }
  }

  ev.fell_off = bird.position.y() < cfg.kill_plane_y;
  // Dropping off the island is a collision with the environment.
  if (ev.fell_off) ev.collided = true;

  ++state.step_count;
  const bool all_empty = std::none_of(state.flowers.begin(), state.flowers.end(),
                                      [](const Flower& f) { return f.has_nectar(); });
  ev.episode_done = all_empty || ev.fell_off || state.step_count >= cfg.max_episode_steps;
  state.terminal = ev.episode_done;

  double reward = compute_reward(ev, state.params, reward_cfg, ranges);
  if (ev.fell_off && reward_cfg.fall_charges_remaining) {
    // Leaving the island must not be cheaper than idling until the time limit.
    const double idle = compute_reward(StepEvents{}, state.params, reward_cfg, ranges);
    const int left = cfg.max_episode_steps - state.step_count;
    const double d = reward_cfg.fall_charge_discount;
    reward += idle * (d < 1.0 ? (1.0 - std::pow(d, left)) / (1.0 - d) : left);
  }
  return StepResult{reward, ev};
}

NearestFlower nearest_flower(const Vec3& position, std::span<const Flower> flowers) {
  NearestFlower best;
  double best_d2 = 0.0;
  for (std::size_t i = 0; i < flowers.size(); ++i) {
    if (!flowers[i].has_nectar()) continue;
    const Vec3 rel = flowers[i].position - position;
    const double d2 = rel.squaredNorm();
    if (best.index < 0 || d2 < best_d2) {
      best.index = static_cast<int>(i);
      best.relative = rel;
      best_d2 = d2;
    }
  }
  return best;
}

std::array<double, 9> ray_perception(const EnvState& state, const EnvConfig& cfg) {
  std::vector<terrain::Sphere> live;
  live.reserve(state.flowers.size());
  for (const auto& f : state.flowers) {
    if (f.has_nectar()) live.push_back(terrain::Sphere{f.position, cfg.flower_ray_radius});
  }
  const Vec3& origin = state.bird.position;
  const std::array<Vec3, 3> dirs = {state.bird.forward(), Vec3::UnitY(), Vec3(-Vec3::UnitY())};
  const double range = cfg.ray_range;
  auto slot = [&](std::optional<double> t) { return t ? *t / range : 1.0; };

  std::array<double, 9> out{};
  for (int d = 0; d < 3; ++d) {
    out[3 * d + 0] = slot(terrain::raycast_spheres(live, origin, dirs[d], range));
    out[3 * d + 1] = slot(terrain::raycast_obstacles(state.obstacles, origin, dirs[d], range));
    out[3 * d + 2] = slot(terrain::raycast_terrain(*state.heightmap, origin, dirs[d], range));
  }
  return out;
}

Observation build_observation(const EnvState& state, const EnvConfig& cfg,
                              const LayoutRanges& ranges) {
  namespace L = obs_layout;
  Observation obs{};
  const auto rays = ray_perception(state, cfg);
  std::copy(rays.begin(), rays.end(), obs.begin() + L::kRays);

  const Quat to_local = state.bird.orientation.conjugate();
  const NearestFlower nf = nearest_flower(beak_position(state.bird, cfg), state.flowers);
  const Vec3 rel = to_local * nf.relative;
  const Vec3 vel = to_local * state.bird.velocity;
  for (int k = 0; k < 3; ++k) {
    obs[L::kFlower + k] = rel[k];
    obs[L::kVelocity + k] = vel[k];
  }
  const Quat& q = state.bird.orientation;
  obs[L::kRotation + 0] = q.w();
  obs[L::kRotation + 1] = q.x();
  obs[L::kRotation + 2] = q.y();
  obs[L::kRotation + 3] = q.z();

  const auto& hm = *state.heightmap;
  const Vec3& p = state.bird.position;
  const Vec3 n = hm.contains(p.x(), p.z()) ? terrain::surface_normal(hm, p.x(), p.z())
                                           : Vec3(Vec3::Zero());
  for (int k = 0; k < 3; ++k) obs[L::kNormal + k] = n[k];

  obs[L::kRadius] = ranges.normalized_radius(state.params.r);
  obs[L::kCongestion] = std::clamp(state.params.c, 0.0, 1.0);
  return obs;
}

ObservationMask parse_mask(std::string_view name) {
  if (name == "full") return ObservationMask::full;
  if (name == "no_normals") return ObservationMask::no_normals;
  if (name == "no_rays") return ObservationMask::no_rays;
  if (name == "no_params") return ObservationMask::no_params;
  throw std::invalid_argument("unknown ablation variant '" + std::string(name) + "'");
}

const char* to_string(ObservationMask mask) {
  switch (mask) {
    case ObservationMask::full: return "full";
    case ObservationMask::no_normals: return "no_normals";
    case ObservationMask::no_rays: return "no_rays";
    case ObservationMask::no_params: return "no_params";
  }
  return "unknown";
}

void apply_mask(std::span<double> obs, ObservationMask mask) {
  namespace L = obs_layout;
  if (obs.size() != static_cast<std::size_t>(L::kSize)) {
    throw std::invalid_argument("apply_mask: observation must have 24 slots");
  }
  auto zero = [&](int begin, int count) {
    std::fill(obs.begin() + begin, obs.begin() + begin + count, 0.0);
  };
  switch (mask) {
    case ObservationMask::full: break;
    case ObservationMask::no_rays: zero(L::kRays, 9); break;
    case ObservationMask::no_normals: zero(L::kNormal, 3); break;
    case ObservationMask::no_params: zero(L::kRadius, 2); break;
  }
}

EpisodeMetrics episode_metrics(std::span<const StepRecord> trace, int max_episode_steps) {
  if (trace.empty()) throw std::invalid_argument("episode_metrics: empty trace");
  EpisodeMetrics m;
  m.m3 = max_episode_steps;
  double reward_sum = 0.0;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& rec = trace[t];
    reward_sum += rec.reward;
    m.m2 += rec.events.nectar_collected;
    if (rec.events.collided) m.m4 += 1.0;
    if (rec.events.nectar_collected > 0 && m.m3 == max_episode_steps) {
      m.m3 = static_cast<double>(t);
    }
  }
  m.m1 = reward_sum / static_cast<double>(trace.size());
  return m;
}

void TrajectoryWriter::write(int episode, const EnvState& state, std::span<const double> action,
                             const StepResult& result, std::span<const double> observation) {
  const auto& b = state.bird;
  nlohmann::json rec = {
      {"episode", episode},
      {"step", state.step_count},
      {"position", vec_json(b.position)},
      {"velocity", vec_json(b.velocity)},
      {"orientation", {b.orientation.w(), b.orientation.x(), b.orientation.y(), b.orientation.z()}},
      {"action", std::vector<double>(action.begin(), action.end())},
      {"reward", result.reward},
      {"events",
       {{"nectar_collected", result.events.nectar_collected},
        {"collided", result.events.collided},
        {"fell_off", result.events.fell_off},
        {"episode_done", result.events.episode_done}}},
      {"nectar_remaining", state.nectar_remaining()},
      {"observation", std::vector<double>(observation.begin(), observation.end())}};
  out_ << rec.dump() << '\n';
}

}  // namespace coadapt::env
