#include "coadapt/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace coadapt::ppo {

void PPOHyperparams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ppo: " + what); };
  if (n_envs < 1) fail("n_envs must be >= 1");
  if (buffer_size < n_envs || buffer_size % n_envs != 0) {
    fail("buffer_size must be a positive multiple of n_envs");
  }
  if (batch_size < 1 || batch_size > buffer_size) fail("batch_size must be in [1, buffer_size]");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (entropy_coef < 0.0) fail("entropy_coef must be >= 0");
  if (!(clip > 0.0 && clip < 1.0)) fail("clip must be in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (epochs < 1) fail("epochs must be >= 1");
  if (value_coef < 0.0) fail("value_coef must be >= 0");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones differ in length");
  }
  GaeResult out;
  out.advantages.resize(static_cast<Eigen::Index>(n));
  out.returns.resize(static_cast<Eigen::Index>(n));
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = (k + 1 == n) ? bootstrap_value : values[k + 1];
    const double nonterminal = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * nonterminal - values[k];
    running = delta + gamma * lambda * nonterminal * running;
    out.advantages[static_cast<Eigen::Index>(k)] = running;
    out.returns[static_cast<Eigen::Index>(k)] = running + values[k];
  }
  return out;
}

RolloutBuffer::RolloutBuffer(int n_envs, int n_steps, int obs_dim, int act_dim)
    : n_envs_(n_envs), n_steps_(n_steps) {
  if (n_envs < 1 || n_steps < 1 || obs_dim < 1 || act_dim < 1) {
    throw std::invalid_argument("RolloutBuffer dimensions must be positive");
  }
  const int cap = capacity();
  observations = Eigen::MatrixXd::Zero(obs_dim, cap);
  actions = Eigen::MatrixXd::Zero(act_dim, cap);
  log_probs = Eigen::VectorXd::Zero(cap);
  rewards = Eigen::VectorXd::Zero(cap);
  values = Eigen::VectorXd::Zero(cap);
  dones.assign(static_cast<std::size_t>(cap), 0);
  bootstrap = Eigen::VectorXd::Zero(n_envs);
  advantages = Eigen::VectorXd::Zero(cap);
  returns = Eigen::VectorXd::Zero(cap);
}

void RolloutBuffer::add(int env, int t, const Eigen::VectorXd& obs, const Eigen::VectorXd& action,
                        double log_prob, double reward, double value, bool done) {
  if (env < 0 || env >= n_envs_ || t < 0 || t >= n_steps_) {
    throw std::out_of_range("RolloutBuffer::add: slot out of range");
  }
  if (obs.size() != observations.rows() || action.size() != actions.rows()) {
    throw std::invalid_argument("RolloutBuffer::add: observation/action dimension mismatch");
  }
  if (filled_ >= capacity()) throw std::logic_error("RolloutBuffer::add: buffer already full");
  const int s = slot(env, t);
  observations.col(s) = obs;
  actions.col(s) = action;
  log_probs[s] = log_prob;
  rewards[s] = reward;
  values[s] = value;
  dones[static_cast<std::size_t>(s)] = done ? 1 : 0;
  ++filled_;
}

void RolloutBuffer::compute_advantages(double gamma, double lambda, bool normalize) {
  if (!full()) throw std::logic_error("compute_advantages: buffer is not full");
  for (int e = 0; e < n_envs_; ++e) {
    const auto off = static_cast<std::size_t>(slot(e, 0));
    const auto len = static_cast<std::size_t>(n_steps_);
    const GaeResult g = compute_gae(
        std::span<const double>(rewards.data() + off, len),
        std::span<const double>(values.data() + off, len),
        std::span<const std::uint8_t>(dones.data() + off, len), bootstrap[e], gamma, lambda);
    advantages.segment(static_cast<Eigen::Index>(off), n_steps_) = g.advantages;
    returns.segment(static_cast<Eigen::Index>(off), n_steps_) = g.returns;
  }
  if (normalize && advantages.size() > 1) {
    const double mean = advantages.mean();
    const double var = (advantages.array() - mean).square().mean();
    advantages = ((advantages.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
  }
}

Normalizer::Normalizer(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), var_(Eigen::VectorXd::Zero(dim)) {}

void Normalizer::update(const Eigen::VectorXd& x) {
  if (x.size() != mean_.size()) throw std::invalid_argument("Normalizer: dimension mismatch");
  const double n = count_ + 1.0;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / n;
  // Chan et al. merge of the running moments with a single sample.
  var_ = ((var_ * count_).array() + delta.array().square() * (count_ / n)).matrix() / n;
  count_ = n;
}

Eigen::VectorXd Normalizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw std::invalid_argument("Normalizer: dimension mismatch");
  return ((x - mean_).array() / (var_.array() + kEpsilon).sqrt()).cwiseMax(-kClip).cwiseMin(kClip);
}

void Normalizer::set_state(Eigen::VectorXd mean, Eigen::VectorXd var, double count) {
  if (mean.size() != var.size()) throw std::invalid_argument("Normalizer: mean/var size mismatch");
  mean_ = std::move(mean);
  var_ = std::move(var);
  count_ = count;
}

Eigen::VectorXd normalize_observation(Normalizer& norm, const Eigen::VectorXd& obs, bool update) {
  if (update) norm.update(obs);
  return norm.apply(obs);
}

ActorCritic make_actor_critic(int obs_dim, int act_dim, const NetworkConfig& cfg, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(act_dim);
  ActorCritic ac;
  ac.policy = nn::DenseNet(sizes, nn::Activation::tanh, nn::Activation::identity);
  sizes.back() = 1;
  ac.value = nn::DenseNet(sizes, nn::Activation::tanh, nn::Activation::identity);
  nn::orthogonal_init(ac.policy, rng, std::sqrt(2.0), cfg.policy_output_gain);
  nn::orthogonal_init(ac.value, rng, std::sqrt(2.0), cfg.value_output_gain);
  ac.log_std = Eigen::VectorXd::Constant(act_dim, cfg.init_log_std);
  nn::clamp_log_std(ac.log_std);
  ac.normalizer = Normalizer(obs_dim);
  ac.policy_opt = nn::AdamState(ac.policy.num_params() + static_cast<std::size_t>(act_dim));
  ac.value_opt = nn::AdamState(ac.value.num_params());
  return ac;
}

VectorEnv::VectorEnv(std::vector<std::unique_ptr<Environment>> envs) : envs_(std::move(envs)) {
  if (envs_.empty()) throw std::invalid_argument("VectorEnv needs at least one environment");
  obs_.resize(envs_.size());
}

void VectorEnv::reset_all() {
  for (std::size_t i = 0; i < envs_.size(); ++i) obs_[i] = envs_[i]->reset();
}

void collect_rollouts(VectorEnv& envs, ActorCritic& ac, RolloutBuffer& buffer, Rng& rng,
                      const CollectOptions& opts) {
  const int n = envs.size();
  if (buffer.n_envs() != n) throw std::invalid_argument("collect_rollouts: env count mismatch");
  auto& obs = envs.observations();
  buffer.clear();

  Eigen::MatrixXd x(ac.obs_dim(), n);
  for (int t = 0; t < buffer.n_steps(); ++t) {
    for (int e = 0; e < n; ++e) {
      x.col(e) = normalize_observation(ac.normalizer, obs[e], opts.update_normalizer);
    }
    const Eigen::MatrixXd means = nn::forward(ac.policy, x);
    const Eigen::MatrixXd values = nn::forward(ac.value, x);
    for (int e = 0; e < n; ++e) {
      const nn::GaussianHead head{means.col(e), ac.log_std};
      const Eigen::VectorXd action = nn::gaussian_sample(head, rng);
      const double log_prob = nn::gaussian_log_prob(head, action);
      Transition tr = envs.at(e).step(action);
      buffer.add(e, t, x.col(e), action, log_prob, tr.reward, values(0, e), tr.done);
      obs[e] = tr.done ? envs.at(e).reset() : std::move(tr.observation);
    }
  }
  for (int e = 0; e < n; ++e) x.col(e) = ac.normalizer.apply(obs[e]);
  buffer.bootstrap = nn::forward(ac.value, x).row(0).transpose();
}

SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  const double unclipped = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  SurrogateTerm s;
  if (unclipped <= clipped) {
    s.objective = unclipped;
    s.d_ratio = advantage;
  } else {
    s.objective = clipped;
    s.d_ratio = 0.0;
  }
  s.clipped = std::abs(ratio - 1.0) > clip;
  return s;
}

UpdateStats ppo_update(ActorCritic& ac, const RolloutBuffer& buffer, const PPOHyperparams& hp,
                       Rng& rng) {
  if (!buffer.full()) throw std::logic_error("ppo_update: rollout buffer is incomplete");
  const int total = buffer.capacity();
  const int batch = std::min(hp.batch_size, total);
  const int act_dim = ac.act_dim();
  const auto policy_n = static_cast<Eigen::Index>(ac.policy.num_params());

  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  nn::ForwardCache policy_cache;
  nn::ForwardCache value_cache;
  Eigen::VectorXd joint(policy_n + act_dim);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < total; start += batch) {
      const int b = std::min(batch, total - start);
      Eigen::MatrixXd obs(buffer.observations.rows(), b);
      Eigen::MatrixXd act(act_dim, b);
      Eigen::VectorXd old_lp(b), adv(b), ret(b);
      for (int i = 0; i < b; ++i) {
        const int s = order[static_cast<std::size_t>(start + i)];
        obs.col(i) = buffer.observations.col(s);
        act.col(i) = buffer.actions.col(s);
        old_lp[i] = buffer.log_probs[s];
        adv[i] = buffer.advantages[s];
        ret[i] = buffer.returns[s];
      }

      // Policy: clipped surrogate + entropy bonus.
      const Eigen::MatrixXd means = nn::forward(ac.policy, obs, &policy_cache);
      const Eigen::VectorXd new_lp = nn::gaussian_log_prob(means, ac.log_std, act);
      const Eigen::VectorXd inv_var = (-2.0 * ac.log_std).array().exp();
      Eigen::MatrixXd d_means(act_dim, b);
      Eigen::VectorXd d_log_std = Eigen::VectorXd::Constant(act_dim, -hp.entropy_coef);
      double objective = 0.0, kl = 0.0, max_dev = 0.0;
      int clipped = 0;
      for (int i = 0; i < b; ++i) {
        const double ratio = std::exp(new_lp[i] - old_lp[i]);
        const SurrogateTerm term = clipped_surrogate(ratio, adv[i], hp.clip);
        objective += term.objective;
        clipped += term.clipped ? 1 : 0;
        kl += (ratio - 1.0) - std::log(ratio);
        max_dev = std::max(max_dev, std::abs(ratio - 1.0));
        // d(-mean objective)/d logp_i
        const double g = -term.d_ratio * ratio / b;
        const Eigen::VectorXd diff = act.col(i) - means.col(i);
        d_means.col(i) = g * (diff.array() * inv_var.array()).matrix();
        d_log_std += g * ((diff.array().square() * inv_var.array()) - 1.0).matrix();
      }
      const nn::Gradients pg = nn::backward(ac.policy, policy_cache, d_means);

      // Critic.
      const Eigen::MatrixXd v = nn::forward(ac.value, obs, &value_cache);
      const Eigen::VectorXd err = v.row(0).transpose() - ret;
      const double value_loss = err.squaredNorm() / b;
      const Eigen::MatrixXd d_v = (2.0 * hp.value_coef / b) * err.transpose();
      const nn::Gradients vg = nn::backward(ac.value, value_cache, d_v);

      // Joint gradient-norm clipping.
      joint << pg.params, d_log_std;
      Eigen::VectorXd value_grad = vg.params;
      const double norm = std::sqrt(joint.squaredNorm() + value_grad.squaredNorm());
      if (norm > hp.max_grad_norm) {
        const double scale = hp.max_grad_norm / (norm + 1e-12);
        joint *= scale;
        value_grad *= scale;
      }

      Eigen::VectorXd params(policy_n + act_dim);
      params << ac.policy.params(), ac.log_std;
      nn::adam_step(std::span<double>(params.data(), params.size()),
                  std::span<const double>(joint.data(), joint.size()), ac.policy_opt,
                  hp.learning_rate);
      ac.policy.params() = params.head(policy_n);
      ac.log_std = params.tail(act_dim);
      nn::clamp_log_std(ac.log_std);
      nn::adam_step(std::span<double>(ac.value.params().data(), ac.value.params().size()),
                  std::span<const double>(value_grad.data(), value_grad.size()), ac.value_opt,
                  hp.learning_rate);

      if (stats.minibatches == 0) {
        stats.initial_max_ratio_deviation = max_dev;
        stats.initial_clip_fraction = static_cast<double>(clipped) / b;
      }
      stats.policy_loss += -objective / b;
      stats.value_loss += value_loss;
      stats.entropy += nn::gaussian_entropy(ac.log_std);
      stats.approx_kl += kl / b;
      stats.clip_fraction += static_cast<double>(clipped) / b;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double k = stats.minibatches;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
  }
  return stats;
}

UpdateStats train_island_policy(ActorCritic& island, std::span<const IslandTransition> batch,
                                const PPOHyperparams& hp, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_island_policy: empty batch");
  const int n = static_cast<int>(batch.size());
  RolloutBuffer buffer(n, 1, island.obs_dim(), island.act_dim());
  for (int i = 0; i < n; ++i) {
    const auto& tr = batch[static_cast<std::size_t>(i)];
    buffer.add(i, 0, tr.observation, tr.action, tr.log_prob, tr.reward, tr.value, true);
  }
  buffer.bootstrap.setZero();
  buffer.compute_advantages(hp.gamma, hp.gae_lambda, true);
  PPOHyperparams local = hp;
  local.n_envs = n;
  local.buffer_size = n;
  local.batch_size = std::min(hp.batch_size, n);
  return ppo_update(island, buffer, local, rng);
}

double squash(double raw, double lo, double hi) {
  return lo + (hi - lo) / (1.0 + std::exp(-raw));
}

}  // namespace coadapt::ppo
