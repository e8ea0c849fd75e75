#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "coadapt/placement.hpp"

using namespace coadapt;
using namespace coadapt::placement;

namespace {

terrain::Heightmap flat_map() {
  return terrain::heightmap_from_nodes({65, 65}, 0.5, -16.0, -16.0, std::vector<double>(65 * 65, 0.0));
}

terrain::Heightmap ramp_map(double slope) {
  std::vector<double> h;
  for (int iz = 0; iz < 65; ++iz)
    for (int ix = 0; ix < 65; ++ix) h.push_back(slope * (-16.0 + 0.5 * ix));
  return terrain::heightmap_from_nodes({65, 65}, 0.5, -16.0, -16.0, std::move(h));
}

Layout layout_of(std::vector<Vec3> flowers, double c = 0.5) {
  Layout l;
  l.flowers = std::move(flowers);
  l.params = {5.0, c};
  l.requested = static_cast<int>(l.flowers.size());
  return l;
}

}  // namespace

TEST(FlowerCount, DensityLaw) {
  PlacementConfig cfg;
  EXPECT_EQ(flower_count({7.0, 0.5}, cfg), 5);   // round(4.9)
  EXPECT_EQ(flower_count({7.0, 0.0}, cfg), cfg.n_min);
  EXPECT_EQ(flower_count({12.0, 1.0}, cfg), 29);  // round(28.8)
  cfg.n_max = 20;
  EXPECT_EQ(flower_count({12.0, 1.0}, cfg), 20);
  for (double r = 3.0; r <= 12.0; r += 0.5) {
    EXPECT_GE(flower_count({r, 0.9}, cfg), flower_count({r, 0.1}, cfg));
  }
  cfg.fixed_count = 5;
  EXPECT_EQ(flower_count({4.0, 0.8}, cfg), 5);
}

TEST(TargetSpacing, DenseMeansTight) {
  PlacementConfig cfg;
  EXPECT_DOUBLE_EQ(target_spacing(0.0, cfg), 4.0);
  EXPECT_DOUBLE_EQ(target_spacing(1.0, cfg), 1.0);
  EXPECT_DOUBLE_EQ(target_spacing(0.5, cfg), 2.5);
}

TEST(SpawnLayout, FlatEmptyTerrainPlacesEveryFlower) {
  const auto hm = flat_map();
  PlacementConfig cfg;
  cfg.fixed_count = 5;
  Rng rng(1);
  const Layout l = spawn_layout(hm, {}, {4.0, 0.8}, Vec3::Zero(), rng, cfg);
  EXPECT_EQ(l.flowers.size(), 5u);
  EXPECT_FALSE(l.incomplete);
}

TEST(SpawnLayout, DeterministicAndInsideDisk) {
  const auto hm = terrain::generate_heightmap(5, {65, 65}, 0.5, terrain::NoiseParams{});
  std::vector<terrain::Obstacle> obstacles = {{Vec3(1, 0, 0), 0.8}, {Vec3(-2, 0, 3), 0.6}};
  PlacementConfig cfg;
  const Vec3 center(0.5, 0.0, 0.25);
  for (int trial = 0; trial < 50; ++trial) {
    Rng a(trial), b(trial);
    const LayoutParams p{3.0 + 0.18 * trial, trial / 49.0};
    const Layout la = spawn_layout(hm, obstacles, p, center, a, cfg);
    const Layout lb = spawn_layout(hm, obstacles, p, center, b, cfg);
    ASSERT_EQ(la.flowers, lb.flowers);
    for (const auto& f : la.flowers) {
      EXPECT_LE(std::hypot(f.x() - center.x(), f.z() - center.z()), p.r + 1e-12);
      EXPECT_LE(terrain::slope_angle(hm, f.x(), f.z()), cfg.max_slope_deg * M_PI / 180.0);
      EXPECT_NEAR(f.y(), terrain::height_at(hm, f.x(), f.z()), 1e-12);
    }
  }
}

TEST(SpawnLayout, NothingPlaceableThrows) {
  const auto hm = ramp_map(3.0);  // ~72 degrees everywhere
  PlacementConfig cfg;
  cfg.max_attempts = 8;
  Rng rng(2);
  EXPECT_THROW(spawn_layout(hm, {}, {5.0, 0.5}, Vec3::Zero(), rng, cfg), std::runtime_error);
}

TEST(Penalty, ZeroOnExactSpacingFlatLayout) {
  const auto hm = flat_map();
  PenaltyWeights w;
  w.target_spacing = 2.5;
  const Layout l = layout_of({Vec3(0, 0, 0), Vec3(2.5, 0, 0), Vec3(5, 0, 0), Vec3(0, 0, 2.5)});
  EXPECT_EQ(total_penalty(l, hm, {}, w), 0.0);
}

TEST(Penalty, TermExamples) {
  const auto flat = flat_map();
  PenaltyWeights w;
  w.overlap = 1.0;
  w.tilt = 1.0;
  w.spacing = 0.0;
  w.target_spacing = 2.0;
  const Layout l = layout_of({Vec3(0, 0, 0), Vec3(2, 0, 0)});
  std::vector<terrain::Obstacle> obstacle = {{Vec3(0.3, 0, 0), 0.2}};
  EXPECT_DOUBLE_EQ(placement_penalty(0, l, flat, obstacle, w), 1.0);  // overlap only
  EXPECT_DOUBLE_EQ(placement_penalty(1, l, flat, obstacle, w), 0.0);

  // Tilted and 0.5 too far from its neighbour: 1 + 0.2 * 0.5.
  const auto ramp = ramp_map(1.0);  // 45 degrees > 20
  w.spacing = 0.2;
  const Layout far = layout_of({Vec3(0, 0, 0), Vec3(2.5, 0, 0)});
  EXPECT_NEAR(placement_penalty(0, far, ramp, {}, w), 1.1, 1e-12);
}

TEST(Penalty, SingletonWithSpacingWeightThrows) {
  const auto hm = flat_map();
  PenaltyWeights w;
  const Layout single = layout_of({Vec3::Zero()});
  EXPECT_THROW(total_penalty(single, hm, {}, w), std::invalid_argument);
  w.spacing = 0.0;
  EXPECT_EQ(total_penalty(single, hm, {}, w), 0.0);
  EXPECT_EQ(total_penalty(layout_of({}), hm, {}, w), 0.0);
}

TEST(Penalty, TotalIsSumAndPermutationInvariant) {
  const auto hm = terrain::generate_heightmap(8, {65, 65}, 0.5, terrain::NoiseParams{2.5, 0.1, 4, 0.5, 2.0});
  std::vector<terrain::Obstacle> obstacles = {{Vec3(0, 0, 0), 1.0}, {Vec3(3, 0, -2), 0.5}};
  PlacementConfig cfg;
  Rng rng(4);
  Layout l = spawn_layout(hm, obstacles, {8.0, 0.7}, Vec3::Zero(), rng, cfg);
  ASSERT_GE(l.flowers.size(), 3u);
  const PenaltyWeights w = weights_for(l, PenaltyWeights{}, cfg);
  double sum = 0.0;
  for (std::size_t i = 0; i < l.flowers.size(); ++i) sum += placement_penalty(i, l, hm, obstacles, w);
  const double total = total_penalty(l, hm, obstacles, w);
  EXPECT_DOUBLE_EQ(total, sum);

  std::reverse(l.flowers.begin(), l.flowers.end());
  EXPECT_NEAR(total_penalty(l, hm, obstacles, w), total, 1e-12);
}

TEST(Penalty, JsonExportMatchesBreakdown) {
  const auto hm = flat_map();
  PenaltyWeights w;
  w.target_spacing = 2.0;
  const Layout l = layout_of({Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 0, 1)});
  const auto j = layout_to_json(l, hm, {}, w);
  ASSERT_EQ(j["flowers"].size(), 3u);
  EXPECT_DOUBLE_EQ(j["total_penalty"].get<double>(), total_penalty(l, hm, {}, w));
  EXPECT_DOUBLE_EQ(j["flowers"][1]["nearest_distance"].get<double>(), 3.0);
  EXPECT_DOUBLE_EQ(j["flowers"][2]["nearest_distance"].get<double>(), 1.0);
}

TEST(HillClimb, GateBlocksAcceptance) {
  HillClimbConfig cfg;
  LayoutRanges ranges;
  HillClimbState state;
  state.base = {7.0, 0.4};
  state.base_score = -100.0;
  Rng rng(1);
  // penalty 10 > gate 0.5 * 5
  const auto d = hill_climb_update(state, {7.5, 0.45}, {0.0, 5.0, 10.0, 0.0}, 10.0, 5, rng, cfg, ranges);
  EXPECT_TRUE(d.gated);
  EXPECT_FALSE(d.accepted);
  EXPECT_EQ(state.base, (LayoutParams{7.0, 0.4}));
  EXPECT_DOUBLE_EQ(d.gate, 2.5);
  EXPECT_LE(std::abs(d.next.r - 7.0), cfg.step_r);
  EXPECT_LE(std::abs(d.next.c - 0.4), cfg.step_c);
}

TEST(HillClimb, WorseScoreReverts) {
  HillClimbConfig cfg;
  LayoutRanges ranges;
  HillClimbState state{{7.0, 0.4}, 3.0};
  Rng rng(2);
  const auto d = hill_climb_update(state, {7.4, 0.42}, {0.0, 1.0, 100.0, 0.0}, 0.0, 5, rng, cfg, ranges);
  EXPECT_FALSE(d.accepted);
  EXPECT_EQ(state.base, (LayoutParams{7.0, 0.4}));
  EXPECT_DOUBLE_EQ(state.base_score, 3.0);

  const auto better = hill_climb_update(state, {7.4, 0.42}, {0.0, 5.0, 100.0, 0.0}, 0.0, 5, rng, cfg, ranges);
  EXPECT_TRUE(better.accepted);
  EXPECT_EQ(state.base, (LayoutParams{7.4, 0.42}));
  EXPECT_DOUBLE_EQ(better.score, 5.0);
}

TEST(HillClimb, ScoreFormula) {
  HillClimbConfig cfg;
  const EpisodeMetrics m{-0.2, 3.0, 120.0, 2.0};
  EXPECT_DOUBLE_EQ(hill_climb_score(m, 4.0, cfg), 3.0 + 0.5 * -0.2 - 0.2 * 2.0 - 0.1 * 4.0);
}

TEST(HillClimb, OutputAlwaysInRangeAndGatedIsFixedPoint) {
  HillClimbConfig cfg;
  cfg.step_r = 3.0;
  cfg.step_c = 0.5;
  LayoutRanges ranges;
  HillClimbState state{{11.8, 0.97}, -1e9};
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto d = hill_climb_update(state, state.base, {0.0, 1.0 * (i % 7), 0.0, 0.0}, 0.0, 5, rng, cfg, ranges);
    EXPECT_GE(d.next.r, ranges.r_min);
    EXPECT_LE(d.next.r, ranges.r_max);
    EXPECT_GE(d.next.c, 0.0);
    EXPECT_LE(d.next.c, 1.0);
  }
  HillClimbState gated{{6.0, 0.5}, 0.0};
  for (int i = 0; i < 100; ++i) {
    hill_climb_update(gated, {6.0 + i * 0.01, 0.5}, {0.0, 50.0, 0.0, 0.0}, 1e6, 5, rng, cfg, ranges);
    EXPECT_EQ(gated.base, (LayoutParams{6.0, 0.5}));
  }
}

TEST(IslandObserve, FixedShapeWithZeroPadding) {
  std::vector<terrain::Obstacle> obstacles = {{Vec3(2, 1, 3), 0.5}, {Vec3(-1, 0, 0), 0.5}};
  const Vec3 center(1, 1, 1);
  const MetricScales scales;
  const auto first = island_observe(obstacles, center, Vec3(0, 2, 0), std::nullopt, 4, scales);
  ASSERT_EQ(first.size(), island_observation_dim(4));
  EXPECT_EQ(first.size(), 19);
  EXPECT_DOUBLE_EQ(first[0], 1.0);
  EXPECT_DOUBLE_EQ(first[2], 2.0);
  EXPECT_DOUBLE_EQ(first[3], -2.0);
  for (int k = 6; k < 12; ++k) EXPECT_EQ(first[k], 0.0);
  EXPECT_DOUBLE_EQ(first[12], -1.0);  // bird start relative to center
  for (int k = 15; k < 19; ++k) EXPECT_EQ(first[k], 0.0);

  const auto next = island_observe(obstacles, center, Vec3(0, 2, 0), EpisodeMetrics{0.5, 15.0, 300.0, 5.0}, 4, scales);
  EXPECT_DOUBLE_EQ(next[15], 0.5);
  EXPECT_DOUBLE_EQ(next[16], 0.5);
  EXPECT_DOUBLE_EQ(next[17], 0.1);
  EXPECT_DOUBLE_EQ(next[18], 0.5);
  EXPECT_THROW(island_observe(obstacles, center, Vec3::Zero(), std::nullopt, 1, scales), std::invalid_argument);
}

TEST(IslandReward, WeightedSum) {
  IslandRewardWeights w;
  EXPECT_EQ(island_reward({}, 0.0, w), 0.0);
  NormalizedMetrics n;
  n.m2 = 0.5;
  EXPECT_NEAR(island_reward(n, 0.2, w), 0.44, 1e-12);
  NormalizedMetrics more = n;
  more.m2 = 0.6;
  EXPECT_GT(island_reward(more, 0.2, w), island_reward(n, 0.2, w));
}
