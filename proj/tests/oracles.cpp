#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace coadapt::oracle {

GaeCase random_gae_case(Rng& rng, int max_len) {
  const int n = std::uniform_int_distribution<int>(1, max_len)(rng);
  GaeCase c;
  for (int t = 0; t < n; ++t) {
    c.rewards.push_back(uniform(rng, -2.0, 2.0));
    c.values.push_back(uniform(rng, -5.0, 5.0));
    c.dones.push_back(uniform(rng, 0.0, 1.0) < 0.15 ? 1 : 0);
  }
  c.bootstrap = uniform(rng, -5.0, 5.0);
  return c;
}

std::vector<double> discounted_advantages(const GaeCase& c, double gamma) {
  const std::size_t n = c.rewards.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double g = 0.0;
    double discount = 1.0;
    bool ended = false;
    for (std::size_t k = t; k < n; ++k) {
      g += discount * c.rewards[k];
      discount *= gamma;
      if (c.dones[k]) {
        ended = true;
        break;
      }
    }
    if (!ended) g += discount * c.bootstrap;
    out[t] = g - c.values[t];
  }
  return out;
}

std::vector<double> td_residuals(const GaeCase& c, double gamma) {
  const std::size_t n = c.rewards.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? c.values[t + 1] : c.bootstrap;
    out[t] = c.rewards[t] + gamma * next * (c.dones[t] ? 0.0 : 1.0) - c.values[t];
  }
  return out;
}

nn::DenseNet random_net(Rng& rng) {
  std::uniform_int_distribution<int> width(1, 12);
  std::uniform_int_distribution<int> depth(1, 3);
  std::vector<int> sizes = {width(rng)};
  const int layers = depth(rng);
  for (int l = 0; l < layers; ++l) sizes.push_back(width(rng));
  const auto pick = [&] {
    return uniform(rng, 0.0, 1.0) < 0.7 ? nn::Activation::tanh : nn::Activation::identity;
  };
  const nn::Activation hidden = pick();
  const nn::Activation output = pick();
  nn::DenseNet net(sizes, hidden, output);
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = uniform(rng, -1.0, 1.0);
  return net;
}

GradCheck grad_check(const nn::DenseNet& net, const Eigen::MatrixXd& x,
                     const Eigen::MatrixXd& upstream, double h) {
  nn::ForwardCache cache;
  nn::forward(net, x, &cache);
  const nn::Gradients g = nn::backward(net, cache, upstream);

  const auto loss = [&](const nn::DenseNet& n, const Eigen::MatrixXd& in) {
    return (nn::forward(n, in).array() * upstream.array()).sum();
  };
  GradCheck out;
  const auto record = [&](double analytic, double numeric) {
    const double abs_err = std::abs(analytic - numeric);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    out.max_abs_error = std::max(out.max_abs_error, abs_err);
    out.max_rel_error = std::max(out.max_rel_error, abs_err / scale);
  };

  nn::DenseNet probe = net;
  for (Eigen::Index i = 0; i < probe.params().size(); ++i) {
    const double saved = probe.params()[i];
    probe.params()[i] = saved + h;
    const double up = loss(probe, x);
    probe.params()[i] = saved - h;
    const double down = loss(probe, x);
    probe.params()[i] = saved;
    record(g.params[i], (up - down) / (2.0 * h));
  }
  Eigen::MatrixXd xp = x;
  for (Eigen::Index i = 0; i < xp.size(); ++i) {
    const double saved = xp.data()[i];
    xp.data()[i] = saved + h;
    const double up = loss(net, xp);
    xp.data()[i] = saved - h;
    const double down = loss(net, xp);
    xp.data()[i] = saved;
    record(g.input.data()[i], (up - down) / (2.0 * h));
  }
  return out;
}

std::vector<double> all_pairs_nearest(const std::vector<Vec3>& points) {
  const std::size_t n = points.size();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (points[i] - points[j]).norm();
      best[i] = std::min(best[i], d);
      best[j] = std::min(best[j], d);
    }
  }
  return best;
}

Eigen::VectorXd ChainEnv::one_hot() const {
  Eigen::VectorXd o = Eigen::VectorXd::Zero(3);
  o[state_] = 1.0;
  return o;
}

Eigen::VectorXd ChainEnv::reset() {
  state_ = 0;
  return one_hot();
}

ppo::Transition ChainEnv::step(const Eigen::VectorXd&) {
  ppo::Transition t;
  t.reward = kRewards[state_];
  if (state_ == 2) {
    t.done = true;
    state_ = 0;  // observation of the next episode; the runner resets anyway
  } else {
    ++state_;
  }
  t.observation = one_hot();
  return t;
}

double ChainEnv::analytic_value(int state, double gamma) {
  double v = 0.0;
  for (int s = 2; s >= state; --s) v = kRewards[s] + gamma * v;
  return v;
}

ChainResult train_chain_critic(int updates, std::uint64_t seed) {
  ppo::PPOHyperparams hp;
  hp.n_envs = 2;
  hp.buffer_size = 24;
  hp.batch_size = 24;
  hp.epochs = 1;
  hp.gamma = 0.9;
  hp.gae_lambda = 0.95;
  hp.learning_rate = 3e-3;
  hp.entropy_coef = 0.0;
  hp.max_grad_norm = 10.0;

  Rng rng = make_rng(seed, "chain");
  ppo::NetworkConfig net;
  net.hidden = {16, 16};
  ppo::ActorCritic ac = ppo::make_actor_critic(3, 1, net, rng);

  std::vector<std::unique_ptr<ppo::Environment>> envs;
  for (int i = 0; i < hp.n_envs; ++i) envs.push_back(std::make_unique<ChainEnv>());
  ppo::VectorEnv venv(std::move(envs));
  venv.reset_all();
  ppo::RolloutBuffer buffer(hp.n_envs, hp.n_steps(), 3, 1);
  for (int u = 0; u < updates; ++u) {
    buffer.clear();
    ppo::collect_rollouts(venv, ac, buffer, rng);
    buffer.compute_advantages(hp.gamma, hp.gae_lambda);
    ppo::ppo_update(ac, buffer, hp, rng);
  }

  ChainResult out;
  for (int s = 0; s < 3; ++s) {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(3);
    o[s] = 1.0;
    out.values[s] = nn::forward(ac.value, ac.normalizer.apply(o))[0];
    out.expected[s] = ChainEnv::analytic_value(s, hp.gamma);
    out.max_rel_error = std::max(out.max_rel_error,
                                 std::abs(out.values[s] - out.expected[s]) / out.expected[s]);
  }
  return out;
}

}  // namespace coadapt::oracle
