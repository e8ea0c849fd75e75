#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "coadapt/nn.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::ppo {

struct PPOHyperparams {
  int batch_size = 1024;
  int buffer_size = 40960;
  double learning_rate = 3e-4;
  double entropy_coef = 1e-3;
  double clip = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  int epochs = 5;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int n_envs = 8;

  int n_steps() const { return buffer_size / n_envs; }
  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), accumulated
/// backwards with factor gamma * lambda and cut at episode boundaries.
/// V(s_T) is `bootstrap_value`.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value,
                      double gamma, double lambda);

/// Trajectory store for n_envs x n_steps transitions. Slot of (env, t) is
/// env * n_steps + t, so each environment's sequence is contiguous.
class RolloutBuffer {
 public:
  RolloutBuffer(int n_envs, int n_steps, int obs_dim, int act_dim);

  int n_envs() const { return n_envs_; }
  int n_steps() const { return n_steps_; }
  int capacity() const { return n_envs_ * n_steps_; }
  int size() const { return filled_; }
  bool full() const { return filled_ == capacity(); }
  int slot(int env, int t) const { return env * n_steps_ + t; }

  void add(int env, int t, const Eigen::VectorXd& obs, const Eigen::VectorXd& action,
           double log_prob, double reward, double value, bool done);
  void clear() { filled_ = 0; }

  // GAE per environment, then per-buffer advantage standardization.
  void compute_advantages(double gamma, double lambda, bool normalize = true);

  Eigen::MatrixXd observations;  // obs_dim x capacity, already normalized
  Eigen::MatrixXd actions;       // act_dim x capacity
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXd bootstrap;     // V of each env's state after the last step
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

 private:
  int n_envs_;
  int n_steps_;
  int filled_ = 0;
};

/// Running per-dimension mean/variance (population), frozen unless asked to
/// update.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(int dim);

  int dim() const { return static_cast<int>(mean_.size()); }
  void update(const Eigen::VectorXd& x);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  double count() const { return count_; }
  void set_state(Eigen::VectorXd mean, Eigen::VectorXd var, double count);

  static constexpr double kEpsilon = 1e-8;
  static constexpr double kClip = 10.0;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  double count_ = 0.0;
};

// (obs - mean) / sqrt(var + 1e-8), clipped to [-10, 10]; the running stats
// absorb `obs` first when `update` is set.
Eigen::VectorXd normalize_observation(Normalizer& norm, const Eigen::VectorXd& obs, bool update);

struct NetworkConfig {
  std::vector<int> hidden = {128, 128};
  double init_log_std = 0.0;
  double policy_output_gain = 0.01;
  double value_output_gain = 1.0;
};

/// Gaussian actor + critic + observation normalizer + optimizer state. The
/// policy optimizer covers [mean-net params | log_std].
struct ActorCritic {
  nn::DenseNet policy;
  Eigen::VectorXd log_std;
  nn::DenseNet value;
  Normalizer normalizer;
  nn::AdamState policy_opt;
  nn::AdamState value_opt;

  int obs_dim() const { return policy.input_dim(); }
  int act_dim() const { return policy.output_dim(); }
};

ActorCritic make_actor_critic(int obs_dim, int act_dim, const NetworkConfig& cfg, Rng& rng);

struct Transition {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
};

// Gym-style episodic environment.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual Transition step(const Eigen::VectorXd& action) = 0;
};

class VectorEnv {
 public:
  explicit VectorEnv(std::vector<std::unique_ptr<Environment>> envs);

  int size() const { return static_cast<int>(envs_.size()); }
  Environment& at(int i) { return *envs_.at(i); }
  void reset_all();
  std::vector<Eigen::VectorXd>& observations() { return obs_; }

 private:
  std::vector<std::unique_ptr<Environment>> envs_;
  std::vector<Eigen::VectorXd> obs_;
};

struct CollectOptions {
  bool update_normalizer = true;
};

/// Steps every environment buffer.n_steps() times with actions sampled from
/// the Gaussian policy on normalized observations; finished environments are
/// reset in place. Environments are stepped in index order from one rng, so
/// a fixed seed reproduces the buffer bit for bit.
void collect_rollouts(VectorEnv& envs, ActorCritic& ac, RolloutBuffer& buffer, Rng& rng,
                      const CollectOptions& opts = {});

struct SurrogateTerm {
  double objective = 0.0;   // min(r A, clip(r) A)
  double d_ratio = 0.0;     // d objective / d r
  bool clipped = false;
};

SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  // First minibatch of the first epoch, before any parameter change.
  double initial_max_ratio_deviation = 0.0;
  double initial_clip_fraction = 0.0;
  int minibatches = 0;
};

/// Clipped-surrogate PPO over `epochs` shuffled passes. Loss per minibatch:
/// -mean(surrogate) + value_coef * mean((V - R)^2) - entropy_coef * H, with
/// the joint gradient clipped to max_grad_norm. Requires a full buffer with
/// advantages computed.
UpdateStats ppo_update(ActorCritic& ac, const RolloutBuffer& buffer, const PPOHyperparams& hp,
                       Rng& rng);

// ---------------------------------------------------------------------------
// One-step episodes for the learned island agent.

struct IslandTransition {
  Eigen::VectorXd observation;  // normalized
  Eigen::VectorXd action;       // raw Gaussian sample (pre-squash)
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
};

/// Every transition is its own episode, so the advantage is reward - V(obs).
UpdateStats train_island_policy(ActorCritic& island, std::span<const IslandTransition> batch,
                                const PPOHyperparams& hp, Rng& rng);

// Logistic squash of a raw action component into [lo, hi].
double squash(double raw, double lo, double hi);

}  // namespace coadapt::ppo
