#include "coadapt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace coadapt::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const char* const kUpdatesHeader =
    "update,timesteps,episodes,policy_loss,value_loss,entropy,approx_kl,clip_fraction,"
    "initial_ratio_deviation,initial_clip_fraction,log_std_mean,roll_reward_per_step,"
    "roll_nectar,roll_success_rate,roll_p_total,roll_collisions,island_r,island_c";
const char* const kEpisodesHeader =
    "episode,env,r,c,n_requested,n_flowers,p_total,m1_reward_per_step,m2_nectar,"
    "m3_time_to_first,m4_collisions,steps,total_reward,success,score,gate,gated,accepted,"
    "next_r,next_c";
const char* const kEvalHeader =
    "episode,r,c,n_flowers,nectar,success,duration,time_to_first_flower,collisions,"
    "reward_per_step,p_total";
const char* const kAblationHeader =
    "variant,episodes,nectar_mean,nectar_std,success_rate,duration_mean,duration_std,"
    "time_to_first_mean,time_to_first_std,collisions_mean,collisions_std,"
    "reward_per_step_mean,reward_per_step_std";
const char* const kGridHeader = "r,c,mean,std,n";

namespace {

constexpr int kRollingWindow = 100;

// Fixed formatting so output files are byte-stable across runs.
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class Csv {
 public:
  Csv& operator<<(double v) { return add(num(v)); }
  Csv& operator<<(int v) { return add(std::to_string(v)); }
  Csv& operator<<(long v) { return add(std::to_string(v)); }
  Csv& operator<<(bool v) { return add(v ? "1" : "0"); }
  Csv& operator<<(const char* v) { return add(v); }
  std::string str() const { return line_.str(); }

 private:
  Csv& add(const std::string& s) {
    if (!first_) line_ << ',';
    line_ << s;
    first_ = false;
    return *this;
  }
  std::ostringstream line_;
  bool first_ = true;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Eigen::VectorXd observation_vector(const env::EnvState& state, const RunConfig& cfg) {
  env::Observation o = env::build_observation(state, cfg.environment, cfg.layout.ranges);
  env::apply_mask(o, cfg.run.observation_mask);
  return Eigen::Map<const Eigen::VectorXd>(o.data(), env::obs_layout::kSize);
}

std::vector<terrain::Obstacle> draw_obstacles(const RunConfig& cfg, const World& world, Rng& rng) {
  if (cfg.obstacles.count == 0 || world.obstacle_pool.empty()) return {};
  const int k = std::min<int>(cfg.obstacles.count, static_cast<int>(world.obstacle_pool.size()));
  return terrain::shuffle_obstacles(world.obstacle_pool, k, world.obstacle_radii, rng);
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation.
double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

Checkpoint make_checkpoint(const RunConfig& cfg, const ppo::ActorCritic& ac,
                           const IslandController& island, long timesteps, long episodes,
                           long updates) {
  Checkpoint ck;
  ck.config = cfg;
  ck.solver = ac;
  ck.island = island.snapshot();
  ck.timesteps = timesteps;
  ck.episodes = episodes;
  ck.updates = updates;
  return ck;
}

std::string checkpoint_name(long update) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "update_%06ld.json", update);
  return buf;
}

}  // namespace

World make_world(const RunConfig& cfg, std::uint64_t seed) {
  const auto& t = cfg.terrain;
  const terrain::GridDims dims{t.nx, t.nz};
  World w;
  if (t.flat) {
    const double ox = -0.5 * (t.nx - 1) * t.cell_size;
    const double oz = -0.5 * (t.nz - 1) * t.cell_size;
    w.heightmap = std::make_shared<terrain::Heightmap>(terrain::heightmap_from_nodes(
        dims, t.cell_size, ox, oz, std::vector<double>(static_cast<std::size_t>(t.nx) * t.nz, 0.0)));
  } else {
    w.heightmap = std::make_shared<terrain::Heightmap>(
        terrain::generate_heightmap(derive_seed(seed, "terrain"), dims, t.cell_size, t.noise));
  }
  const auto& hm = *w.heightmap;
  w.center = Vec3(hm.center_x(), terrain::height_at(hm, hm.center_x(), hm.center_z()), hm.center_z());

  Rng rng = make_rng(seed, "obstacle.pool");
  const auto& o = cfg.obstacles;
  for (int i = 0; i < o.pool_size; ++i) {
    auto p = terrain::sample_valid_position(hm, {}, w.center, o.pool_radius, std::numbers::pi / 2.0, 0.0, rng);
    const double radius = uniform(rng, o.radius_min, o.radius_max);
    if (!p) continue;
    w.obstacle_pool.push_back(*p);
    w.obstacle_radii.push_back(radius);
  }
  return w;
}

double layout_penalty(const RunConfig& cfg, const World& world, const placement::Layout& layout,
                      std::span<const terrain::Obstacle> obstacles) {
  placement::PenaltyWeights w = placement::weights_for(layout, cfg.penalty, cfg.placement);
  if (layout.flowers.size() < 2) w.spacing = 0.0;
  return placement::total_penalty(layout, *world.heightmap, obstacles, w);
}

// ---------------------------------------------------------------------------

IslandController::IslandController(const RunConfig& cfg, std::uint64_t seed)
    : cfg_(&cfg),
      mode_(cfg.island.mode),
      current_(cfg.layout.ranges.clip(cfg.layout.initial)),
      rng_(make_rng(seed, "island")) {
  hill_.base = current_;
  if (mode_ == IslandMode::learned) {
    Rng init = make_rng(seed, "island.init");
    policy_ = ppo::make_actor_critic(placement::island_observation_dim(cfg.island.obstacle_slots),
                                     2, cfg.island.network, init);
  }
}

IslandController::IslandController(const RunConfig& cfg, IslandSnapshot snapshot,
                                   std::uint64_t seed)
    : cfg_(&cfg),
      mode_(snapshot.mode),
      current_(snapshot.current),
      hill_(snapshot.hill_climb),
      policy_(std::move(snapshot.policy)),
      previous_(snapshot.previous),
      rng_(make_rng(seed, "island")) {
  if (mode_ == IslandMode::learned && !policy_) {
    throw std::invalid_argument("learned island snapshot without a policy");
  }
}

Proposal IslandController::propose(std::span<const terrain::Obstacle> obstacles,
                                   const Vec3& island_center, const Vec3& bird_start) {
  Proposal p;
  if (mode_ != IslandMode::learned) {
    p.params = current_;
    return p;
  }
  auto& ac = *policy_;
  const auto& ranges = cfg_->layout.ranges;
  const Eigen::VectorXd raw_obs =
      placement::island_observe(obstacles, island_center, bird_start, previous_,
                                cfg_->island.obstacle_slots, cfg_->island.scales);
  p.observation = ppo::normalize_observation(ac.normalizer, raw_obs, true);
  const nn::GaussianHead head{nn::forward(ac.policy, p.observation), ac.log_std};
  p.raw_action = nn::gaussian_sample(head, rng_);
  p.log_prob = nn::gaussian_log_prob(head, p.raw_action);
  p.value = nn::forward(ac.value, p.observation)[0];
  p.params = ranges.clip({ppo::squash(p.raw_action[0], ranges.r_min, ranges.r_max),
                          ppo::squash(p.raw_action[1], 0.0, 1.0)});
  current_ = p.params;
  return p;
}

IslandFeedback IslandController::feedback(const Proposal& proposal, const EpisodeMetrics& metrics,
                                          double penalty, int n_flowers) {
  IslandFeedback fb;
  switch (mode_) {
    case IslandMode::fixed:
      fb.next = current_;
      return fb;
    case IslandMode::heuristic: {
      const auto d = placement::hill_climb_update(hill_, proposal.params, metrics, penalty,
                                                  n_flowers, rng_, cfg_->hill_climb,
                                                  cfg_->layout.ranges);
      current_ = d.next;
      fb.next = d.next;
      fb.score = d.score;
      fb.gate = d.gate;
      fb.gated = d.gated;
      fb.accepted = d.accepted;
      return fb;
    }
    case IslandMode::learned: {
      const auto& s = cfg_->island;
      ppo::IslandTransition tr;
      tr.observation = proposal.observation;
      tr.action = proposal.raw_action;
      tr.log_prob = proposal.log_prob;
      tr.value = proposal.value;
      tr.reward = placement::island_reward(placement::normalize_metrics(metrics, s.scales),
                                           penalty / s.penalty_scale, s.reward);
      pending_.push_back(std::move(tr));
      previous_ = metrics;
      if (static_cast<int>(pending_.size()) >= s.episodes_per_update) {
        ppo::train_island_policy(*policy_, pending_, s.ppo, rng_);
        pending_.clear();
        ++island_updates_;
      }
      fb.next = current_;
      fb.score = pending_.empty() ? 0.0 : pending_.back().reward;
      fb.accepted = true;
      return fb;
    }
  }
  return fb;
}

IslandSnapshot IslandController::snapshot() const {
  IslandSnapshot s;
  s.mode = mode_;
  s.current = current_;
  s.hill_climb = hill_;
  s.policy = policy_;
  s.previous = previous_;
  return s;
}

// ---------------------------------------------------------------------------

CoadaptiveEnv::CoadaptiveEnv(const RunConfig& cfg, std::shared_ptr<const World> world,
                             IslandController* controller, Rng rng, int env_index,
                             EpisodeSink sink)
    : cfg_(&cfg),
      world_(std::move(world)),
      controller_(controller),
      rng_(rng),
      env_index_(env_index),
      sink_(std::move(sink)),
      reward_(effective_reward(cfg)) {}

void CoadaptiveEnv::set_trajectory_writer(env::TrajectoryWriter* writer, int max_episodes) {
  writer_ = writer;
  trajectory_episodes_ = max_episodes;
}

Eigen::VectorXd CoadaptiveEnv::observe() const { return observation_vector(state_, *cfg_); }

Eigen::VectorXd CoadaptiveEnv::reset() {
  const auto& hm = *world_->heightmap;
  auto obstacles = draw_obstacles(*cfg_, *world_, rng_);
  const env::BirdStart start = env::sample_bird_start(hm, obstacles, rng_, cfg_->environment);
  proposal_ = controller_->propose(obstacles, world_->center, start.position);
  layout_ = placement::spawn_layout(hm, obstacles, proposal_.params, world_->center, rng_,
                                    cfg_->placement);
  penalty_ = layout_penalty(*cfg_, *world_, layout_, obstacles);
  state_ = env::reset_at(world_->heightmap, std::move(obstacles), layout_.flowers,
                         proposal_.params, start, cfg_->environment);
  trace_.clear();
  episode_reward_ = 0.0;
  ++episodes_started_;
  return observe();
}

ppo::Transition CoadaptiveEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != env::kActionDim) throw std::invalid_argument("CoadaptiveEnv: bad action size");
  const std::span<const double> a(action.data(), env::kActionDim);
  const env::Action act = env::Action::from(a);

  ppo::Transition tr;
  for (int k = 0; k < cfg_->environment.decision_period && !state_.terminal; ++k) {
    const env::StepResult res =
        env::step(state_, act, cfg_->environment, reward_, cfg_->layout.ranges);
    trace_.push_back({res.reward, res.events});
    episode_reward_ += res.reward;
    tr.reward += res.reward;
    ++physics_steps_;
    if (writer_ && episodes_started_ <= trajectory_episodes_) {
      const Eigen::VectorXd o = observe();
      writer_->write(episodes_started_ - 1, state_, a, res,
                     std::span<const double>(o.data(), env::obs_layout::kSize));
    }
  }
  tr.observation = observe();
  tr.done = state_.terminal;
  if (tr.done) {
    const EpisodeMetrics m = env::episode_metrics(trace_, cfg_->environment.max_episode_steps);
    EpisodeRecord rec;
    rec.env = env_index_;
    rec.r = proposal_.params.r;
    rec.c = proposal_.params.c;
    rec.n_requested = layout_.requested;
    rec.n_flowers = static_cast<int>(layout_.flowers.size());
    rec.p_total = penalty_;
    rec.metrics = m;
    rec.steps = state_.step_count;
    rec.total_reward = episode_reward_;
    rec.success = state_.nectar_remaining() <= 0.0;
    rec.island = controller_->feedback(proposal_, m, penalty_, rec.n_flowers);
    if (sink_) sink_(rec);
  }
  return tr;
}

// ---------------------------------------------------------------------------

EvalAggregate aggregate(std::span<const EvalEpisode> episodes) {
  EvalAggregate a;
  a.episodes = static_cast<int>(episodes.size());
  if (episodes.empty()) return a;
  auto column = [&](auto field) {
    std::vector<double> v;
    v.reserve(episodes.size());
    for (const auto& e : episodes) v.push_back(static_cast<double>(field(e)));
    return v;
  };
  const auto nectar = column([](const EvalEpisode& e) { return e.nectar; });
  const auto success = column([](const EvalEpisode& e) { return e.success ? 1.0 : 0.0; });
  const auto duration = column([](const EvalEpisode& e) { return e.steps; });
  const auto first = column([](const EvalEpisode& e) { return e.time_to_first; });
  const auto coll = column([](const EvalEpisode& e) { return e.collisions; });
  const auto rps = column([](const EvalEpisode& e) { return e.reward_per_step; });
  a.nectar_mean = mean_of(nectar);
  a.nectar_std = std_of(nectar);
  a.success_rate = mean_of(success);
  a.duration_mean = mean_of(duration);
  a.duration_std = std_of(duration);
  a.time_to_first_mean = mean_of(first);
  a.time_to_first_std = std_of(first);
  a.collisions_mean = mean_of(coll);
  a.collisions_std = std_of(coll);
  a.reward_per_step_mean = mean_of(rps);
  a.reward_per_step_std = std_of(rps);
  return a;
}

json aggregate_to_json(const EvalAggregate& a) {
  auto ms = [](double m, double s) { return json{{"mean", m}, {"std", s}}; };
  return {{"episodes", a.episodes},
          {"nectar_per_episode", ms(a.nectar_mean, a.nectar_std)},
          {"success_rate", a.success_rate},
          {"episode_duration", ms(a.duration_mean, a.duration_std)},
          {"time_to_first_flower", ms(a.time_to_first_mean, a.time_to_first_std)},
          {"collisions", ms(a.collisions_mean, a.collisions_std)},
          {"reward_per_step", ms(a.reward_per_step_mean, a.reward_per_step_std)}};
}

EvalReport evaluate(const ppo::ActorCritic& ac, const RunConfig& cfg, const LayoutParams& params,
                    const EvalOptions& opts) {
  if (opts.episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  RunConfig run_cfg = cfg;
  run_cfg.run.observation_mask = opts.mask;
  const World world = make_world(cfg, cfg.seed);
  const auto& hm = *world.heightmap;
  const LayoutParams p = cfg.layout.ranges.clip(params);
  const env::RewardConfig reward = effective_reward(cfg);

  EvalReport report;
  report.episodes.reserve(static_cast<std::size_t>(opts.episodes));
  for (int e = 0; e < opts.episodes; ++e) {
    Rng rng = make_rng(opts.seed, "eval.episode", static_cast<std::uint64_t>(e));
    auto obstacles = draw_obstacles(cfg, world, rng);
    const env::BirdStart start = env::sample_bird_start(hm, obstacles, rng, cfg.environment);
    const placement::Layout layout = placement::spawn_layout(hm, obstacles, p, world.center, rng,
                                                             cfg.placement);
    const double penalty = layout_penalty(cfg, world, layout, obstacles);
    env::EnvState state = env::reset_at(world.heightmap, std::move(obstacles), layout.flowers, p,
                                        start, cfg.environment);
    std::vector<env::StepRecord> trace;
    Eigen::VectorXd action(env::kActionDim);
    while (!state.terminal) {
      // Actions are held for decision_period physics steps, as in training.
      const bool decide = state.step_count % cfg.environment.decision_period == 0;
      if (decide && opts.policy == PolicyKind::random) {
        for (int k = 0; k < env::kActionDim; ++k) action[k] = uniform(rng, -1.0, 1.0);
      } else if (decide) {
        const Eigen::VectorXd x = ac.normalizer.apply(observation_vector(state, run_cfg));
        const Eigen::VectorXd mean = nn::forward(ac.policy, x);
        action = opts.deterministic ? mean : nn::gaussian_sample({mean, ac.log_std}, rng);
      }
      const auto res = env::step(state, env::Action::from({action.data(), env::kActionDim}),
                                 cfg.environment, reward, cfg.layout.ranges);
      trace.push_back({res.reward, res.events});
    }
    const EpisodeMetrics m = env::episode_metrics(trace, cfg.environment.max_episode_steps);
    EvalEpisode ep;
    ep.episode = e;
    ep.r = p.r;
    ep.c = p.c;
    ep.n_flowers = static_cast<int>(layout.flowers.size());
    ep.nectar = m.m2;
    ep.success = state.nectar_remaining() <= 0.0;
    ep.steps = state.step_count;
    ep.time_to_first = m.m3;
    ep.collisions = static_cast<int>(m.m4);
    ep.reward_per_step = m.m1;
    ep.p_total = penalty;
    report.episodes.push_back(ep);
  }
  report.aggregate = aggregate(report.episodes);
  return report;
}

// ---------------------------------------------------------------------------

TrainResult cmd_train(const RunConfig& cfg, const fs::path& out_dir, const TrainHooks& hooks) {
  validate(cfg);
  fs::create_directories(out_dir / "checkpoints");
  save_config((out_dir / "config.json").string(), cfg);

  const std::uint64_t seed = cfg.seed;
  auto world = std::make_shared<const World>(make_world(cfg, seed));
  IslandController controller(cfg, seed);
  Rng init_rng = make_rng(seed, "policy.init");
  ppo::ActorCritic ac =
      ppo::make_actor_critic(env::obs_layout::kSize, env::kActionDim, cfg.network, init_rng);

  auto episodes_csv = open_out(out_dir / "episodes.csv");
  auto updates_csv = open_out(out_dir / "updates.csv");
  episodes_csv << kEpisodesHeader << '\n';
  updates_csv << kUpdatesHeader << '\n';

  TrainResult result;
  long episode_counter = 0;
  auto sink = [&](const EpisodeRecord& r) {
    EpisodeRecord rec = r;
    rec.episode = episode_counter++;
    Csv row;
    row << rec.episode << rec.env << rec.r << rec.c << rec.n_requested << rec.n_flowers
        << rec.p_total << rec.metrics.m1 << rec.metrics.m2 << rec.metrics.m3 << rec.metrics.m4
        << rec.steps << rec.total_reward << rec.success << rec.island.score << rec.island.gate
        << rec.island.gated << rec.island.accepted << rec.island.next.r << rec.island.next.c;
    episodes_csv << row.str() << '\n';
    result.episodes.push_back(rec);
  };

  std::ofstream trajectory_out;
  std::optional<env::TrajectoryWriter> trajectory;
  if (cfg.run.trajectory_episodes > 0) {
    trajectory_out = open_out(out_dir / "trajectory.jsonl");
    trajectory.emplace(trajectory_out);
  }

  const ppo::PPOHyperparams& hp = cfg.ppo;
  std::vector<std::unique_ptr<ppo::Environment>> envs;
  std::vector<const CoadaptiveEnv*> adapters;
  for (int i = 0; i < hp.n_envs; ++i) {
    auto e = std::make_unique<CoadaptiveEnv>(cfg, world, &controller,
                                             make_rng(seed, "env", static_cast<std::uint64_t>(i)),
                                             i, sink);
    if (i == 0 && trajectory) e->set_trajectory_writer(&*trajectory, cfg.run.trajectory_episodes);
    adapters.push_back(e.get());
    envs.push_back(std::move(e));
  }
  ppo::VectorEnv venv(std::move(envs));
  venv.reset_all();

  ppo::RolloutBuffer buffer(hp.n_envs, hp.n_steps(), env::obs_layout::kSize, env::kActionDim);
  Rng rollout_rng = make_rng(seed, "rollout");
  Rng update_rng = make_rng(seed, "update");

  long timesteps = 0;
  long updates = 0;
  auto save_ck = [&](const fs::path& path) {
    save_checkpoint(path.string(),
                    make_checkpoint(cfg, ac, controller, timesteps, episode_counter, updates));
  };

  // The budget is a hard cap: a rollout that could cross it is not started.
  const long rollout_max = static_cast<long>(hp.buffer_size) * cfg.environment.decision_period;
  while (timesteps + rollout_max <= cfg.run.total_timesteps &&
         (cfg.run.max_episodes == 0 || episode_counter < cfg.run.max_episodes)) {
    ppo::collect_rollouts(venv, ac, buffer, rollout_rng);
    // Simulator steps, so held actions count once per physics step.
    timesteps = 0;
    for (const auto* a : adapters) timesteps += a->physics_steps();
    buffer.compute_advantages(hp.gamma, hp.gae_lambda, true);
    const ppo::UpdateStats stats = ppo::ppo_update(ac, buffer, hp, update_rng);
    ++updates;
    if (stats.initial_max_ratio_deviation > 1e-6 || stats.initial_clip_fraction != 0.0) {
      throw std::logic_error("ppo: first-minibatch ratios drifted from 1 before any update");
    }

    const auto n = static_cast<long>(result.episodes.size());
    const long from = std::max(0L, n - kRollingWindow);
    double rps = 0.0, nectar = 0.0, success = 0.0, pen = 0.0, coll = 0.0;
    for (long i = from; i < n; ++i) {
      const auto& e = result.episodes[static_cast<std::size_t>(i)];
      rps += e.metrics.m1;
      nectar += e.metrics.m2;
      success += e.success ? 1.0 : 0.0;
      pen += e.p_total;
      coll += e.metrics.m4;
    }
    const double count = std::max(1.0, static_cast<double>(n - from));
    Csv row;
    row << updates << timesteps << episode_counter << stats.policy_loss << stats.value_loss
        << stats.entropy << stats.approx_kl << stats.clip_fraction
        << stats.initial_max_ratio_deviation << stats.initial_clip_fraction << ac.log_std.mean()
        << rps / count << nectar / count << success / count << pen / count << coll / count
        << controller.current().r << controller.current().c;
    updates_csv << row.str() << '\n';
    updates_csv.flush();
    episodes_csv.flush();
    result.updates.push_back(stats);

    if (cfg.run.checkpoint_every > 0 && updates % cfg.run.checkpoint_every == 0) {
      save_ck(out_dir / "checkpoints" / checkpoint_name(updates));
    }
    if (hooks.on_update) hooks.on_update(updates, stats);
  }

  save_ck(out_dir / "checkpoint.json");
  result.final_checkpoint =
      make_checkpoint(cfg, ac, controller, timesteps, episode_counter, updates);

  const auto current = controller.current();
  write_json(out_dir / "report.json",
             {{"timesteps", timesteps},
              {"episodes", episode_counter},
              {"updates", updates},
              {"island_mode", to_string(controller.mode())},
              {"island_updates", controller.island_updates()},
              {"final_params", {{"r", current.r}, {"c", current.c}}},
              {"observation_mask", env::to_string(cfg.run.observation_mask)}});
  if (!episodes_csv || !updates_csv) throw std::runtime_error("failed writing metrics CSV");
  return result;
}

EvalReport cmd_eval(const Checkpoint& ck, int episodes, std::uint64_t seed, const fs::path& out_dir,
                    PolicyKind policy) {
  fs::create_directories(out_dir);
  EvalOptions opts;
  opts.episodes = episodes;
  opts.seed = seed;
  opts.deterministic = ck.config.eval.deterministic;
  opts.policy = policy;
  opts.mask = ck.config.run.observation_mask;
  const EvalReport report = evaluate(ck.solver, ck.config, ck.island.current, opts);

  auto csv = open_out(out_dir / "eval_episodes.csv");
  csv << kEvalHeader << '\n';
  for (const auto& e : report.episodes) {
    Csv row;
    row << e.episode << e.r << e.c << e.n_flowers << e.nectar << e.success << e.steps
        << e.time_to_first << e.collisions << e.reward_per_step << e.p_total;
    csv << row.str() << '\n';
  }
  if (!csv) throw std::runtime_error("failed writing eval_episodes.csv");

  json summary = aggregate_to_json(report.aggregate);
  summary["policy"] = policy == PolicyKind::random ? "random" : "trained";
  summary["seed"] = seed;
  summary["params"] = {{"r", ck.island.current.r}, {"c", ck.island.current.c}};
  summary["observation_mask"] = env::to_string(opts.mask);
  write_json(out_dir / "eval_summary.json", summary);
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg,
                                    std::span<const env::ObservationMask> variants,
                                    const fs::path& out_dir) {
  if (variants.empty()) throw std::invalid_argument("cmd_ablate: no variants");
  fs::create_directories(out_dir);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
  std::vector<AblationRow> rows;
  for (const auto variant : variants) {
    RunConfig v = cfg;
    v.run.observation_mask = variant;
    const fs::path dir = out_dir / env::to_string(variant);
    const TrainResult trained = cmd_train(v, dir);
    const EvalReport report = cmd_eval(trained.final_checkpoint, v.eval.episodes, eval_seed, dir);
    rows.push_back({variant, report.aggregate});
  }

  auto csv = open_out(out_dir / "ablation.csv");
  csv << kAblationHeader << '\n';
  for (const auto& r : rows) {
    const auto& a = r.aggregate;
    Csv row;
    row << env::to_string(r.variant) << a.episodes << a.nectar_mean << a.nectar_std
        << a.success_rate << a.duration_mean << a.duration_std << a.time_to_first_mean
        << a.time_to_first_std << a.collisions_mean << a.collisions_std << a.reward_per_step_mean
        << a.reward_per_step_std;
    csv << row.str() << '\n';
  }
  if (!csv) throw std::runtime_error("failed writing ablation.csv");
  return rows;
}

std::vector<GridCell> cmd_grid(const Checkpoint& ck, std::span<const double> r_values,
                               std::span<const double> c_values, int episodes_per_cell,
                               std::uint64_t seed, const fs::path& out_dir) {
  if (r_values.empty() || c_values.empty()) throw std::invalid_argument("cmd_grid: empty value list");
  if (episodes_per_cell < 1) throw std::invalid_argument("cmd_grid: episodes_per_cell must be >= 1");
  fs::create_directories(out_dir);

  EvalOptions opts;
  opts.episodes = episodes_per_cell;
  opts.seed = seed;
  opts.deterministic = ck.config.eval.deterministic;
  opts.mask = ck.config.run.observation_mask;

  std::vector<GridCell> cells;
  for (double r : r_values) {
    for (double c : c_values) {
      const EvalReport report = evaluate(ck.solver, ck.config, {r, c}, opts);
      GridCell cell;
      cell.r = r;
      cell.c = c;
      for (const auto& e : report.episodes) cell.values.push_back(e.nectar);
      cell.mean = mean_of(cell.values);
      cell.std = std_of(cell.values);
      cell.n = static_cast<int>(cell.values.size());
      cells.push_back(std::move(cell));
    }
  }

  auto csv = open_out(out_dir / "grid.csv");
  auto per_episode = open_out(out_dir / "grid_episodes.csv");
  csv << kGridHeader << '\n';
  per_episode << "r,c,episode,nectar\n";
  for (const auto& cell : cells) {
    Csv row;
    row << cell.r << cell.c << cell.mean << cell.std << cell.n;
    csv << row.str() << '\n';
    for (std::size_t i = 0; i < cell.values.size(); ++i) {
      Csv ep;
      ep << cell.r << cell.c << static_cast<int>(i) << cell.values[i];
      per_episode << ep.str() << '\n';
    }
  }
  if (!csv || !per_episode) throw std::runtime_error("failed writing grid CSV");
  return cells;
}

}  // namespace coadapt::harness
