#include "coadapt/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

namespace coadapt {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json adam_to_json(const nn::AdamState& s) {
  return {{"m", vec_to_json(s.m)}, {"v", vec_to_json(s.v)}, {"step", s.step},
          {"beta1", s.beta1},      {"beta2", s.beta2},      {"epsilon", s.epsilon}};
}

nn::AdamState adam_from_json(const json& j) {
  nn::AdamState s;
  s.m = vec_from_json(j.at("m"));
  s.v = vec_from_json(j.at("v"));
  s.step = j.at("step").get<long>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  return s;
}

json net_to_json(const nn::DenseNet& net) {
  const bool tanh_hidden =
      net.num_layers() < 2 || net.layers().front().activation == nn::Activation::tanh;
  return {{"sizes", net.sizes()},
          {"hidden_activation", tanh_hidden ? "tanh" : "identity"},
          {"params", vec_to_json(net.params())}};
}

nn::DenseNet net_from_json(const json& j) {
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  const auto hidden = j.at("hidden_activation").get<std::string>() == "tanh"
                          ? nn::Activation::tanh
                          : nn::Activation::identity;
  nn::DenseNet net(sizes, hidden, nn::Activation::identity);
  Eigen::VectorXd params = vec_from_json(j.at("params"));
  if (params.size() != net.params().size()) {
    throw CheckpointError("checkpoint: parameter count does not match network sizes");
  }
  net.params() = std::move(params);
  return net;
}

json score_to_json(double s) { return std::isfinite(s) ? json(s) : json(nullptr); }

double score_from_json(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

json actor_critic_to_json(const ppo::ActorCritic& ac) {
  return {{"policy", net_to_json(ac.policy)},
          {"log_std", vec_to_json(ac.log_std)},
          {"value", net_to_json(ac.value)},
          {"normalizer",
           {{"mean", vec_to_json(ac.normalizer.mean())},
            {"var", vec_to_json(ac.normalizer.var())},
            {"count", ac.normalizer.count()}}},
          {"policy_opt", adam_to_json(ac.policy_opt)},
          {"value_opt", adam_to_json(ac.value_opt)}};
}

ppo::ActorCritic actor_critic_from_json(const json& j) {
  ppo::ActorCritic ac;
  ac.policy = net_from_json(j.at("policy"));
  ac.log_std = vec_from_json(j.at("log_std"));
  ac.value = net_from_json(j.at("value"));
  const auto& n = j.at("normalizer");
  ac.normalizer.set_state(vec_from_json(n.at("mean")), vec_from_json(n.at("var")),
                          n.at("count").get<double>());
  ac.policy_opt = adam_from_json(j.at("policy_opt"));
  ac.value_opt = adam_from_json(j.at("value_opt"));
  if (ac.log_std.size() != ac.act_dim() || ac.normalizer.dim() != ac.obs_dim() ||
      ac.value.input_dim() != ac.obs_dim()) {
    throw CheckpointError("checkpoint: inconsistent actor-critic shapes");
  }
  return ac;
}

json checkpoint_to_json(const Checkpoint& ck) {
  json island = {{"mode", to_string(ck.island.mode)},
                 {"current", {{"r", ck.island.current.r}, {"c", ck.island.current.c}}},
                 {"hill_climb",
                  {{"base_r", ck.island.hill_climb.base.r},
                   {"base_c", ck.island.hill_climb.base.c},
                   {"base_score", score_to_json(ck.island.hill_climb.base_score)}}}};
  island["policy"] = ck.island.policy ? actor_critic_to_json(*ck.island.policy) : json(nullptr);
  if (ck.island.previous) {
    const auto& m = *ck.island.previous;
    island["previous"] = {{"m1", m.m1}, {"m2", m.m2}, {"m3", m.m3}, {"m4", m.m4}};
  } else {
    island["previous"] = nullptr;
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", config_to_json(ck.config)},
          {"solver", actor_critic_to_json(ck.solver)},
          {"island", island},
          {"timesteps", ck.timesteps},
          {"episodes", ck.episodes},
          {"updates", ck.updates}};
}

Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
    throw CheckpointError("not a coadapt checkpoint");
  }
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  try {
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    ck.solver = actor_critic_from_json(j.at("solver"));
    const auto& island = j.at("island");
    ck.island.mode = parse_island_mode(island.at("mode").get<std::string>());
    ck.island.current = {island.at("current").at("r").get<double>(),
                         island.at("current").at("c").get<double>()};
    const auto& hc = island.at("hill_climb");
    ck.island.hill_climb.base = {hc.at("base_r").get<double>(), hc.at("base_c").get<double>()};
    ck.island.hill_climb.base_score = score_from_json(hc.at("base_score"));
    if (!island.at("policy").is_null()) ck.island.policy = actor_critic_from_json(island.at("policy"));
    if (!island.at("previous").is_null()) {
      const auto& m = island.at("previous");
      ck.island.previous = EpisodeMetrics{m.at("m1").get<double>(), m.at("m2").get<double>(),
                                          m.at("m3").get<double>(), m.at("m4").get<double>()};
    }
    ck.timesteps = j.at("timesteps").get<long>();
    ck.episodes = j.at("episodes").get<long>();
    ck.updates = j.at("updates").get<long>();
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_to_json(ck).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace coadapt
