#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "coadapt/checkpoint.hpp"
#include "coadapt/config.hpp"

using namespace coadapt;
using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
  const RunConfig d;
  EXPECT_NO_THROW(validate(d));
  const json j = config_to_json(d);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(j["ppo"]["buffer_size"], 40960);
  EXPECT_EQ(j["environment"]["max_episode_steps"], 3000);
  EXPECT_EQ(j["island"]["mode"], "heuristic");
}

TEST(Config, PartialOverridesKeepDefaults) {
  const json j = json::parse(R"({"seed": 9, "ppo": {"n_envs": 4, "buffer_size": 64,
                                  "batch_size": 16}, "island": {"mode": "learned"}})");
  const RunConfig c = config_from_json(j);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.ppo.n_envs, 4);
  EXPECT_EQ(c.ppo.clip, 0.2);
  EXPECT_EQ(c.island.mode, IslandMode::learned);
  EXPECT_EQ(c.environment.dt, 0.02);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    config_from_json(json::parse(R"({"ppo": {"learnin_rate": 1e-3}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learnin_rate"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(json::parse(R"({"ppo": {"clip": 2.0}})")), std::exception);
  EXPECT_THROW(config_from_json(json::parse(R"({"island": {"mode": "random"}})")), std::exception);
  EXPECT_THROW(config_from_json(json::parse(R"({"layout": {"r_min": 5, "r_max": 4}})")),
               std::exception);
  EXPECT_THROW(config_from_json(json::parse(R"({"ppo": {"epochs": "five"}})")), std::exception);
  EXPECT_THROW(config_from_json(json::parse(
                   R"({"obstacles": {"count": 20}, "island": {"obstacle_slots": 8}})")),
               std::exception);
}

TEST(Config, FallChargeDiscountFollowsLearner) {
  RunConfig c;
  c.ppo.gamma = 0.9;
  c.environment.decision_period = 2;
  EXPECT_NEAR(effective_reward(c).fall_charge_discount, std::sqrt(0.9), 1e-15);
  c.reward.fall_charge_discount = 1.0;
  EXPECT_EQ(effective_reward(c).fall_charge_discount, 1.0);
  EXPECT_THROW(config_from_json(json::parse(R"({"reward": {"fall_charge_discount": 1.5}})")),
               std::exception);
}

TEST(Config, BudgetMustCoverOneRollout) {
  EXPECT_THROW(config_from_json(json::parse(
                   R"({"ppo": {"buffer_size": 1024}, "environment": {"decision_period": 3},
                       "run": {"total_timesteps": 3000}})")),
               std::exception);
  EXPECT_NO_THROW(config_from_json(json::parse(
      R"({"ppo": {"buffer_size": 1024}, "environment": {"decision_period": 3},
          "run": {"total_timesteps": 3072}})")));
}

TEST(Config, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "coadapt_cfg_test.json";
  RunConfig c;
  c.seed = 123;
  c.layout.initial = {5.5, 0.25};
  c.run.observation_mask = env::ObservationMask::no_rays;
  save_config(path.string(), c);
  const RunConfig back = load_config(path.string());
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  std::filesystem::remove(path);
  EXPECT_THROW(load_config("/nonexistent/cfg.json"), std::exception);
}

TEST(Checkpoint, BitExactRoundTrip) {
  Checkpoint ck;
  ck.config.seed = 77;
  Rng rng(1);
  ck.solver = ppo::make_actor_critic(24, 4, ck.config.network, rng);
  ck.solver.normalizer.update(Eigen::VectorXd::LinSpaced(24, -1.0 / 3.0, 2.0 / 7.0));
  ck.solver.normalizer.update(Eigen::VectorXd::Constant(24, M_PI));
  ck.solver.policy_opt.step = 3;
  ck.solver.policy_opt.m.setConstant(0.1);
  ck.island.mode = IslandMode::learned;
  ck.island.current = {6.1, 0.33};
  ck.island.hill_climb.base_score = -std::numeric_limits<double>::infinity();
  ck.island.policy = ppo::make_actor_critic(55, 2, ck.config.island.network, rng);
  ck.island.previous = EpisodeMetrics{-0.01, 3.0, 120.0, 1.0};
  ck.timesteps = 4096;
  ck.episodes = 3;
  ck.updates = 2;

  const auto path = std::filesystem::temp_directory_path() / "coadapt_ck_test.json";
  save_checkpoint(path.string(), ck);
  const Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);

  EXPECT_EQ(back.solver.policy.params(), ck.solver.policy.params());
  EXPECT_EQ(back.solver.value.params(), ck.solver.value.params());
  EXPECT_EQ(back.solver.log_std, ck.solver.log_std);
  EXPECT_EQ(back.solver.normalizer.mean(), ck.solver.normalizer.mean());
  EXPECT_EQ(back.solver.normalizer.var(), ck.solver.normalizer.var());
  EXPECT_EQ(back.solver.policy_opt.m, ck.solver.policy_opt.m);
  EXPECT_EQ(back.solver.policy_opt.step, 3);
  ASSERT_TRUE(back.island.policy.has_value());
  EXPECT_EQ(back.island.policy->policy.params(), ck.island.policy->policy.params());
  EXPECT_EQ(back.island.current, ck.island.current);
  EXPECT_TRUE(std::isinf(back.island.hill_climb.base_score));
  ASSERT_TRUE(back.island.previous.has_value());
  EXPECT_EQ(back.island.previous->m3, 120.0);
  EXPECT_EQ(back.timesteps, 4096);
  EXPECT_EQ(config_to_json(back.config), config_to_json(ck.config));
  EXPECT_EQ(checkpoint_to_json(back), checkpoint_to_json(ck));
}

TEST(Checkpoint, RejectsForeignFormatAndVersion) {
  Checkpoint ck;
  Rng rng(2);
  ck.solver = ppo::make_actor_critic(24, 4, ppo::NetworkConfig{{4}}, rng);
  json j = checkpoint_to_json(ck);
  json wrong_version = j;
  wrong_version["version"] = kCheckpointVersion + 1;
  EXPECT_THROW(checkpoint_from_json(wrong_version), CheckpointError);
  json wrong_format = j;
  wrong_format["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_json(wrong_format), CheckpointError);
  EXPECT_NO_THROW(checkpoint_from_json(j));
}
