// coadapt: train / eval / ablate / grid front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coadapt/checkpoint.hpp"
#include "coadapt/config.hpp"
#include "coadapt/harness.hpp"

namespace fs = std::filesystem;
using namespace coadapt;

namespace {

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

Checkpoint checkpoint_with_overrides(const std::string& ck_path, const std::string& cfg_path) {
  Checkpoint ck = load_checkpoint(ck_path);
  // A config passed alongside a checkpoint replaces the embedded one for
  // world/evaluation settings; the networks must still fit it.
  if (!cfg_path.empty()) ck.config = load_config(cfg_path);
  return ck;
}

void print_aggregate(const harness::EvalAggregate& a) {
  std::printf("episodes %d  nectar %.3f +- %.3f  success %.1f%%  duration %.1f  first %.1f  "
              "collisions %.2f  reward/step %.5f\n",
              a.episodes, a.nectar_mean, a.nectar_std, 100.0 * a.success_rate, a.duration_mean,
              a.time_to_first_mean, a.collisions_mean, a.reward_per_step_mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-adaptive hummingbird foraging: PPO solver + procedural island generator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config (defaults if omitted)");
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  };

  auto* train = app.add_subcommand("train", "run the co-adaptive training loop");
  add_common(train);

  std::string checkpoint_path;
  int episodes = 0;
  bool random_policy = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on fresh layouts");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval->add_option("--episodes", episodes, "number of layouts (default: eval.episodes)");
  eval->add_flag("--random-policy", random_policy, "uniform random actions instead of the policy");

  std::vector<std::string> variants = {"full", "no_normals", "no_rays", "no_params"};
  auto* ablate = app.add_subcommand("ablate", "train and evaluate observation ablations");
  add_common(ablate);
  ablate->add_option("--variants", variants, "subset of full, no_normals, no_rays, no_params")
      ->capture_default_str();

  std::vector<double> r_values = {4.0, 7.0, 10.0};
  std::vector<double> c_values = {0.2, 0.5, 0.8};
  auto* grid = app.add_subcommand("grid", "evaluate a checkpoint over an (r, c) grid");
  add_common(grid);
  grid->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  grid->add_option("--r", r_values, "radius values")->capture_default_str();
  grid->add_option("--c", c_values, "congestion values")->capture_default_str();
  grid->add_option("--episodes", episodes, "episodes per cell (default: eval.episodes)");

  auto* defaults = app.add_subcommand("defaults", "print the full default config");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (*defaults) {
      std::cout << config_to_json(RunConfig{}).dump(2) << '\n';
      return 0;
    }
    if (*train) {
      RunConfig cfg = config_or_default(config_path);
      if (seed) cfg.seed = *seed;
      harness::TrainHooks hooks;
      hooks.on_update = [](long update, const ppo::UpdateStats& s) {
        std::fprintf(stderr, "update %ld  policy %.4f  value %.4f  entropy %.3f  kl %.5f\n", update,
                     s.policy_loss, s.value_loss, s.entropy, s.approx_kl);
      };
      const auto result = harness::cmd_train(cfg, out_dir, hooks);
      std::printf("trained %ld steps, %ld episodes, %ld updates -> %s\n",
                  result.final_checkpoint.timesteps, result.final_checkpoint.episodes,
                  result.final_checkpoint.updates, out_dir.c_str());
    } else if (*eval) {
      const Checkpoint ck = checkpoint_with_overrides(checkpoint_path, config_path);
      const int n = episodes > 0 ? episodes : ck.config.eval.episodes;
      const auto report = harness::cmd_eval(
          ck, n, seed.value_or(ck.config.seed), out_dir,
          random_policy ? harness::PolicyKind::random : harness::PolicyKind::trained);
      print_aggregate(report.aggregate);
    } else if (*ablate) {
      RunConfig cfg = config_or_default(config_path);
      if (seed) cfg.seed = *seed;
      std::vector<env::ObservationMask> masks;
      for (const auto& v : variants) masks.push_back(env::parse_mask(v));
      for (const auto& row : harness::cmd_ablate(cfg, masks, out_dir)) {
        std::printf("%-10s ", env::to_string(row.variant));
        print_aggregate(row.aggregate);
      }
    } else if (*grid) {
      const Checkpoint ck = checkpoint_with_overrides(checkpoint_path, config_path);
      const int n = episodes > 0 ? episodes : ck.config.eval.episodes;
      for (const auto& cell : harness::cmd_grid(ck, r_values, c_values, n,
                                                seed.value_or(ck.config.seed), out_dir)) {
        std::printf("r %5.2f  c %4.2f  nectar %.3f +- %.3f  (n=%d)\n", cell.r, cell.c, cell.mean,
                    cell.std, cell.n);
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "done in %.1f s\n", secs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
