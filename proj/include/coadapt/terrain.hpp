#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coadapt/rng.hpp"
#include "coadapt/types.hpp"

namespace coadapt::terrain {

struct NoiseParams {
  double amplitude = 1.5;  // world units
  double frequency = 0.08;
  int octaves = 4;
  double gain = 0.5;
  double lacunarity = 2.0;

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

struct GridDims {
  int nx = 65;
  int nz = 65;

  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Regular-grid elevation field. Node (ix, iz) sits at world
/// (origin_x + ix * cell_size, origin_z + iz * cell_size); storage is
/// row-major with z as the slow axis.
class Heightmap {
 public:
  Heightmap(GridDims dims, double cell_size, double origin_x, double origin_z,
            std::uint64_t seed, NoiseParams noise, std::vector<double> elevations);

  int nx() const { return dims_.nx; }
  int nz() const { return dims_.nz; }
  double cell_size() const { return cell_size_; }
  double origin_x() const { return origin_x_; }
  double origin_z() const { return origin_z_; }
  std::uint64_t seed() const { return seed_; }
  const NoiseParams& noise() const { return noise_; }

  double min_x() const { return origin_x_; }
  double min_z() const { return origin_z_; }
  double max_x() const { return origin_x_ + (dims_.nx - 1) * cell_size_; }
  double max_z() const { return origin_z_ + (dims_.nz - 1) * cell_size_; }
  double center_x() const { return 0.5 * (min_x() + max_x()); }
  double center_z() const { return 0.5 * (min_z() + max_z()); }
  bool contains(double x, double z) const;

  double node(int ix, int iz) const { return elevations_[index(ix, iz)]; }
  double node_x(int ix) const { return origin_x_ + ix * cell_size_; }
  double node_z(int iz) const { return origin_z_ + iz * cell_size_; }
  std::span<const double> elevations() const { return elevations_; }

  friend bool operator==(const Heightmap&, const Heightmap&) = default;

 private:
  std::size_t index(int ix, int iz) const {
    return static_cast<std::size_t>(iz) * dims_.nx + ix;
  }

  GridDims dims_;
  double cell_size_;
  double origin_x_;
  double origin_z_;
  std::uint64_t seed_;
  NoiseParams noise_;
  std::vector<double> elevations_;
};

/// Fractal 2D gradient noise: octave o samples at frequency * lacunarity^o
/// with weight amplitude * gain^o. Each octave is bounded by sqrt(2)/2, so
/// |elevation| <= amplitude * sum(gain^o).
Heightmap generate_heightmap(std::uint64_t seed, GridDims dims, double cell_size,
                             const NoiseParams& noise);

/// Same, with an explicit grid corner instead of centering the grid on the
/// world origin.
Heightmap generate_heightmap(std::uint64_t seed, GridDims dims, double cell_size,
                             const NoiseParams& noise, double origin_x,
                             double origin_z);

/// A heightmap built from explicit node values (test fixtures, synthetic planes).
Heightmap heightmap_from_nodes(GridDims dims, double cell_size, double origin_x,
                               double origin_z, std::vector<double> elevations);

// Bilinear interpolation. Throws std::out_of_range outside the grid.
double height_at(const Heightmap& hm, double x, double z);

// Unit upward normal from central differences of height_at (one-sided at the
// grid border). Throws std::out_of_range outside the grid.
Vec3 surface_normal(const Heightmap& hm, double x, double z);

// Angle between the surface normal and world up, in radians.
double slope_angle(const Heightmap& hm, double x, double z);

struct Obstacle {
  Vec3 center;
  double radius = 1.0;
};

struct Sphere {
  Vec3 center;
  double radius = 0.0;
};

enum class HitTag { flower, obstacle, terrain };

const char* to_string(HitTag tag);

struct RayHit {
  HitTag tag;
  double distance;
};

// Analytic ray/sphere distance; 0 when the origin is inside the sphere.
std::optional<double> raycast_sphere(const Vec3& origin, const Vec3& direction,
                                     const Vec3& center, double radius,
                                     double max_range);

// Nearest hit over a set of spheres.
std::optional<double> raycast_spheres(std::span<const Sphere> spheres,
                                      const Vec3& origin, const Vec3& direction,
                                      double max_range);
std::optional<double> raycast_obstacles(std::span<const Obstacle> obstacles,
                                        const Vec3& origin, const Vec3& direction,
                                        double max_range);

/// Ray-march against the heightmap with step cell_size / 2, then eight
/// bisection refinements. Samples outside the grid never count as ground.
std::optional<double> raycast_terrain(const Heightmap& hm, const Vec3& origin,
                                      const Vec3& direction, double max_range);

/// Closest hit among terrain, obstacle spheres and flower spheres.
std::optional<RayHit> raycast(const Heightmap& hm, std::span<const Obstacle> obstacles,
                              std::span<const Sphere> flowers, const Vec3& origin,
                              const Vec3& direction, double max_range);

inline constexpr int kDefaultMaxAttempts = 64;

/// Rejection sampling inside the horizontal disk around `center`. A
/// candidate is rejected when it leaves the grid, its slope exceeds
/// `max_slope` (radians), or it is closer than `clearance` to any obstacle
/// surface. Returned points lie on the terrain.
std::optional<Vec3> sample_valid_position(const Heightmap& hm,
                                          std::span<const Obstacle> obstacles,
                                          const Vec3& center, double radius,
                                          double max_slope, double clearance,
                                          Rng& rng,
                                          int max_attempts = kDefaultMaxAttempts);

// Picks k distinct pool entries without replacement, in shuffled order.
// radii[i] is the radius of pool entry i.
std::vector<Obstacle> shuffle_obstacles(std::span<const Vec3> pool, int k,
                                        std::span<const double> radii, Rng& rng);

// Text fixture format, see docs/formats.md.
void write_heightmap(std::ostream& out, const Heightmap& hm);
Heightmap read_heightmap(std::istream& in);
void save_heightmap(const std::string& path, const Heightmap& hm);
Heightmap load_heightmap(const std::string& path);

}  // namespace coadapt::terrain
