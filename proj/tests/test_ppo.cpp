#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "coadapt/ppo.hpp"
#include "oracles.hpp"

using namespace coadapt;
using namespace coadapt::ppo;

namespace {

// Reward is the negative squared distance between the action and a
// state-dependent target; episodes last 5 steps.
class TargetEnv : public Environment {
 public:
  explicit TargetEnv(std::uint64_t seed) : rng_(seed) {}
  int observation_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  Eigen::VectorXd reset() override {
    t_ = 0;
    return draw();
  }
  Transition step(const Eigen::VectorXd& a) override {
    Transition tr;
    tr.reward = -(a - Eigen::Vector2d(obs_[0], -obs_[1])).squaredNorm();
    tr.done = ++t_ == 5;
    tr.observation = draw();
    return tr;
  }

 private:
  Eigen::VectorXd draw() {
    obs_ = Eigen::Vector2d(uniform(rng_, -1, 1), uniform(rng_, -1, 1));
    return obs_;
  }
  Rng rng_;
  Eigen::VectorXd obs_;
  int t_ = 0;
};

VectorEnv target_envs(int n, std::uint64_t seed) {
  std::vector<std::unique_ptr<Environment>> envs;
  for (int i = 0; i < n; ++i) envs.push_back(std::make_unique<TargetEnv>(seed + i));
  VectorEnv v(std::move(envs));
  v.reset_all();
  return v;
}

}  // namespace

TEST(Gae, LambdaOneIsDiscountedReturnMinusBaseline) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto c = oracle::random_gae_case(rng, 64);
    const auto g = compute_gae(c.rewards, c.values, c.dones, c.bootstrap, 0.97, 1.0);
    const auto expected = oracle::discounted_advantages(c, 0.97);
    for (std::size_t t = 0; t < expected.size(); ++t) {
      ASSERT_NEAR(g.advantages[t], expected[t], 1e-9);
      ASSERT_NEAR(g.returns[t], expected[t] + c.values[t], 1e-9);
    }
  }
}

TEST(Gae, LambdaZeroIsTdResidualExactly) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto c = oracle::random_gae_case(rng, 64);
    const auto g = compute_gae(c.rewards, c.values, c.dones, c.bootstrap, 0.99, 0.0);
    const auto delta = oracle::td_residuals(c, 0.99);
    for (std::size_t t = 0; t < delta.size(); ++t) ASSERT_EQ(g.advantages[t], delta[t]);
  }
}

TEST(Gae, DoneCutsBootstrapAndLengthMismatchThrows) {
  const std::vector<double> r = {1.0, 1.0}, v = {0.0, 0.0};
  const std::vector<std::uint8_t> d = {0, 1};
  const auto g = compute_gae(r, v, d, 100.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(g.advantages[1], 1.0);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.5);
  const std::vector<std::uint8_t> short_d = {0};
  EXPECT_THROW(compute_gae(r, v, short_d, 0.0, 0.5, 1.0), std::invalid_argument);
}

TEST(RolloutBuffer, PerEnvironmentGaeAndStandardization) {
  RolloutBuffer buf(2, 3, 1, 1);
  const Eigen::VectorXd o = Eigen::VectorXd::Zero(1);
  for (int e = 0; e < 2; ++e) {
    for (int t = 0; t < 3; ++t) buf.add(e, t, o, o, 0.0, e == 0 ? 1.0 : -1.0, 0.0, false);
  }
  EXPECT_THROW(buf.add(0, 0, o, o, 0.0, 0.0, 0.0, false), std::logic_error);
  buf.bootstrap << 2.0, 0.0;
  buf.compute_advantages(0.5, 1.0, false);
  // env 0: 1 + .5 + .25 + .125 * 2; env 1 never sees env 0's bootstrap.
  EXPECT_DOUBLE_EQ(buf.advantages[buf.slot(0, 0)], 2.0);
  EXPECT_DOUBLE_EQ(buf.advantages[buf.slot(1, 0)], -1.75);
  EXPECT_DOUBLE_EQ(buf.returns[buf.slot(1, 2)], -1.0);

  buf.compute_advantages(0.5, 1.0, true);
  EXPECT_NEAR(buf.advantages.mean(), 0.0, 1e-12);
  EXPECT_NEAR((buf.advantages.array() - buf.advantages.mean()).square().mean(), 1.0, 1e-6);
  // Returns stay unnormalized.
  EXPECT_DOUBLE_EQ(buf.returns[buf.slot(0, 0)], 2.0);

  RolloutBuffer partial(1, 2, 1, 1);
  EXPECT_THROW(partial.add(0, 2, o, o, 0, 0, 0, false), std::out_of_range);
  EXPECT_THROW(partial.compute_advantages(0.9, 0.9), std::logic_error);
}

TEST(Normalizer, MatchesBatchMoments) {
  Rng rng(4);
  Normalizer norm(3);
  Eigen::MatrixXd xs(3, 500);
  for (int i = 0; i < 500; ++i) {
    xs.col(i) = Eigen::Vector3d(uniform(rng, -1, 5), 100.0 + standard_normal(rng), 7.0);
    norm.update(xs.col(i));
  }
  const Eigen::VectorXd mean = xs.rowwise().mean();
  const Eigen::VectorXd var = (xs.colwise() - mean).array().square().rowwise().mean();
  EXPECT_TRUE(norm.mean().isApprox(mean, 1e-12));
  EXPECT_TRUE(norm.var().isApprox(var, 1e-10));
  EXPECT_EQ(norm.count(), 500.0);
  // Constant dimension maps to zero; outliers are clipped.
  const Eigen::VectorXd z = norm.apply(Eigen::Vector3d(1e6, 100.0, 7.0));
  EXPECT_EQ(z[0], Normalizer::kClip);
  EXPECT_EQ(z[2], 0.0);
  // apply() never moves the statistics.
  EXPECT_EQ(norm.count(), 500.0);
}

TEST(Surrogate, ClipRegions) {
  auto s = clipped_surrogate(1.5, 2.0, 0.2);
  EXPECT_DOUBLE_EQ(s.objective, 2.4);
  EXPECT_EQ(s.d_ratio, 0.0);
  EXPECT_TRUE(s.clipped);
  s = clipped_surrogate(1.5, -2.0, 0.2);  // pessimistic side stays unclipped
  EXPECT_DOUBLE_EQ(s.objective, -3.0);
  EXPECT_DOUBLE_EQ(s.d_ratio, -2.0);
  s = clipped_surrogate(0.5, -1.0, 0.2);
  EXPECT_DOUBLE_EQ(s.objective, -0.8);
  EXPECT_EQ(s.d_ratio, 0.0);
  s = clipped_surrogate(1.0, 3.0, 0.2);
  EXPECT_DOUBLE_EQ(s.objective, 3.0);
  EXPECT_FALSE(s.clipped);
}

TEST(Ppo, RatioIdentityOnFreshRollout) {
  PPOHyperparams hp;
  hp.n_envs = 4;
  hp.buffer_size = 256;
  hp.batch_size = 64;
  Rng rng(5);
  ActorCritic ac = make_actor_critic(2, 2, NetworkConfig{{16, 16}}, rng);
  auto envs = target_envs(4, 10);
  RolloutBuffer buf(hp.n_envs, hp.n_steps(), 2, 2);
  for (int round = 0; round < 3; ++round) {
    collect_rollouts(envs, ac, buf, rng);
    buf.compute_advantages(hp.gamma, hp.gae_lambda);
    const UpdateStats s = ppo_update(ac, buf, hp, rng);
    EXPECT_LT(s.initial_max_ratio_deviation, 1e-6);
    EXPECT_EQ(s.initial_clip_fraction, 0.0);
    EXPECT_EQ(s.minibatches, hp.epochs * 4);
  }
}

TEST(Ppo, CollectionIsDeterministic) {
  const auto run = [] {
    Rng rng(9);
    ActorCritic ac = make_actor_critic(2, 2, NetworkConfig{{8}}, rng);
    auto envs = target_envs(3, 1);
    RolloutBuffer buf(3, 20, 2, 2);
    collect_rollouts(envs, ac, buf, rng);
    buf.compute_advantages(0.99, 0.95);
    ppo_update(ac, buf, PPOHyperparams{.batch_size = 30, .buffer_size = 60, .n_envs = 3}, rng);
    return std::make_pair(buf.actions, ac.policy.params());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Ppo, LearnsContextualBandit) {
  PPOHyperparams hp;
  hp.n_envs = 4;
  hp.buffer_size = 512;
  hp.batch_size = 128;
  hp.learning_rate = 3e-3;
  hp.gamma = 0.0;
  Rng rng(6);
  ActorCritic ac = make_actor_critic(2, 2, NetworkConfig{{32}}, rng);
  auto envs = target_envs(4, 20);
  RolloutBuffer buf(hp.n_envs, hp.n_steps(), 2, 2);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 60; ++it) {
    collect_rollouts(envs, ac, buf, rng);
    if (it == 0) first = buf.rewards.mean();
    last = buf.rewards.mean();
    buf.compute_advantages(hp.gamma, hp.gae_lambda);
    ppo_update(ac, buf, hp, rng);
  }
  // Random actions score about -(2/3 + 2 * sigma^2); a good policy nears 0.
  EXPECT_LT(first, -2.0);
  EXPECT_GT(last, -0.8);
}

TEST(Ppo, CriticMatchesChainReturns) {
  const auto res = oracle::train_chain_critic(2000, 1);
  for (int s = 0; s < 3; ++s) {
    EXPECT_NEAR(res.values[s], res.expected[s], 0.05 * res.expected[s]) << "state " << s;
  }
  EXPECT_DOUBLE_EQ(res.expected[0], 1.0 + 0.9 * 2.0 + 0.81 * 3.0);
}

TEST(Ppo, IslandPolicyFollowsReward) {
  PPOHyperparams hp;
  hp.learning_rate = 1e-2;
  hp.batch_size = 16;
  Rng rng(7);
  ActorCritic island = make_actor_critic(3, 1, NetworkConfig{{8}}, rng);
  const Eigen::VectorXd obs = Eigen::Vector3d(0.1, -0.2, 0.3);
  for (int it = 0; it < 100; ++it) {
    std::vector<IslandTransition> batch;
    for (int i = 0; i < 16; ++i) {
      const nn::GaussianHead head{nn::forward(island.policy, obs), island.log_std};
      IslandTransition tr;
      tr.observation = obs;
      tr.action = nn::gaussian_sample(head, rng);
      tr.log_prob = nn::gaussian_log_prob(head, tr.action);
      tr.value = nn::forward(island.value, obs)[0];
      tr.reward = tr.action[0];  // larger raw action is better
      batch.push_back(tr);
    }
    train_island_policy(island, batch, hp, rng);
  }
  EXPECT_GT(nn::forward(island.policy, obs)[0], 0.5);
  EXPECT_THROW(train_island_policy(island, {}, hp, rng), std::invalid_argument);
}

TEST(Ppo, SquashAndValidation) {
  EXPECT_DOUBLE_EQ(squash(0.0, 3.0, 12.0), 7.5);
  EXPECT_GT(squash(50.0, 0.0, 1.0), 0.999);
  EXPECT_LT(squash(-50.0, 0.0, 1.0), 0.001);
  PPOHyperparams hp;
  EXPECT_NO_THROW(hp.validate());
  hp.buffer_size = 100;
  hp.n_envs = 8;
  EXPECT_THROW(hp.validate(), std::invalid_argument);
  hp = PPOHyperparams{};
  hp.clip = 1.5;
  EXPECT_THROW(hp.validate(), std::invalid_argument);
}
