#pragma once

#include <Eigen/Core>

namespace coadapt {

using Vec3 = Eigen::Vector3d;

// The island agent's co-adaptation knobs: spawn radius r (world units) and
// congestion c in [0, 1].
struct LayoutParams {
  double r = 7.0;
  double c = 0.4;

  friend bool operator==(const LayoutParams&, const LayoutParams&) = default;
};

struct LayoutRanges {
  double r_min = 3.0;
  double r_max = 12.0;

  LayoutParams clip(LayoutParams p) const;
  double normalized_radius(double r) const;
};

// Solver -> generator feedback for one finished episode.
struct EpisodeMetrics {
  double m1 = 0.0;  // mean reward per step
  double m2 = 0.0;  // nectar collected
  double m3 = 0.0;  // steps elapsed before first collection
  double m4 = 0.0;  // collision incidents
};

inline LayoutParams LayoutRanges::clip(LayoutParams p) const {
  p.r = p.r < r_min ? r_min : (p.r > r_max ? r_max : p.r);
  p.c = p.c < 0.0 ? 0.0 : (p.c > 1.0 ? 1.0 : p.c);
  return p;
}

inline double LayoutRanges::normalized_radius(double r) const {
  const double t = (r - r_min) / (r_max - r_min);
  return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

}  // namespace coadapt
