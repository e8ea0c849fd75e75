#include "coadapt/terrain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace coadapt::terrain {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Classic gradient noise with a seeded permutation table and eight unit
// gradient directions.
class GradientNoise2D {
 public:
  explicit GradientNoise2D(std::uint64_t seed) {
    std::array<int, 256> p{};
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    std::shuffle(p.begin(), p.end(), rng);
    for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
    for (int k = 0; k < 8; ++k) {
      gx_[k] = std::cos(k * kPi / 4.0);
      gy_[k] = std::sin(k * kPi / 4.0);
    }
  }

  double operator()(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int xi = static_cast<int>(static_cast<long long>(fx) & 255);
    const int yi = static_cast<int>(static_cast<long long>(fy) & 255);
    const double xf = x - fx;
    const double yf = y - fy;
    const double u = fade(xf);
    const double v = fade(yf);

    const int aa = perm_[perm_[xi] + yi];
    const int ab = perm_[perm_[xi] + yi + 1];
    const int ba = perm_[perm_[xi + 1] + yi];
    const int bb = perm_[perm_[xi + 1] + yi + 1];

    const double n00 = grad(aa, xf, yf);
    const double n10 = grad(ba, xf - 1.0, yf);
    const double n01 = grad(ab, xf, yf - 1.0);
    const double n11 = grad(bb, xf - 1.0, yf - 1.0);
    const double nx0 = n00 + u * (n10 - n00);
    const double nx1 = n01 + u * (n11 - n01);
    return nx0 + v * (nx1 - nx0);
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }
  double grad(int h, double dx, double dy) const {
    return gx_[h & 7] * dx + gy_[h & 7] * dy;
  }

  std::array<int, 512> perm_{};
  std::array<double, 8> gx_{};
  std::array<double, 8> gy_{};
};

void check_grid(GridDims dims, double cell_size) {
  if (dims.nx < 2 || dims.nz < 2) {
    throw std::invalid_argument("heightmap grid must be at least 2x2");
  }
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw std::invalid_argument("heightmap cell_size must be positive");
  }
}

void check_inside(const Heightmap& hm, double x, double z) {
  if (!hm.contains(x, z)) {
    std::ostringstream msg;
    msg << "terrain query (" << x << ", " << z << ") is outside the island";
    throw std::out_of_range(msg.str());
  }
}

double bilinear(const Heightmap& hm, double x, double z) {
  const double gx = (x - hm.origin_x()) / hm.cell_size();
  const double gz = (z - hm.origin_z()) / hm.cell_size();
  const int ix = std::clamp(static_cast<int>(std::floor(gx)), 0, hm.nx() - 2);
  const int iz = std::clamp(static_cast<int>(std::floor(gz)), 0, hm.nz() - 2);
  const double tx = gx - ix;
  const double tz = gz - iz;
  const double h0 = (1.0 - tx) * hm.node(ix, iz) + tx * hm.node(ix + 1, iz);
  const double h1 = (1.0 - tx) * hm.node(ix, iz + 1) + tx * hm.node(ix + 1, iz + 1);
  return (1.0 - tz) * h0 + tz * h1;
}

}  // namespace

Heightmap::Heightmap(GridDims dims, double cell_size, double origin_x, double origin_z,
                     std::uint64_t seed, NoiseParams noise, std::vector<double> elevations)
    : dims_(dims),
      cell_size_(cell_size),
      origin_x_(origin_x),
      origin_z_(origin_z),
      seed_(seed),
      noise_(noise),
      elevations_(std::move(elevations)) {
  check_grid(dims, cell_size);
  if (elevations_.size() != static_cast<std::size_t>(dims.nx) * dims.nz) {
    throw std::invalid_argument("heightmap elevation count does not match grid dims");
  }
  for (double e : elevations_) {
    if (!std::isfinite(e)) throw std::invalid_argument("heightmap elevation is not finite");
  }
}

bool Heightmap::contains(double x, double z) const {
  return x >= min_x() && x <= max_x() && z >= min_z() && z <= max_z();
}

Heightmap generate_heightmap(std::uint64_t seed, GridDims dims, double cell_size,
                             const NoiseParams& noise) {
  check_grid(dims, cell_size);
  return generate_heightmap(seed, dims, cell_size, noise,
                            -0.5 * (dims.nx - 1) * cell_size,
                            -0.5 * (dims.nz - 1) * cell_size);
}

Heightmap generate_heightmap(std::uint64_t seed, GridDims dims, double cell_size,
                             const NoiseParams& noise, double origin_x,
                             double origin_z) {
  check_grid(dims, cell_size);
  if (noise.octaves < 1) throw std::invalid_argument("noise octaves must be >= 1");

  std::vector<GradientNoise2D> octaves;
  octaves.reserve(noise.octaves);
  for (int o = 0; o < noise.octaves; ++o) {
    octaves.emplace_back(derive_seed(seed, "terrain.octave", o));
  }

  std::vector<double> elevations(static_cast<std::size_t>(dims.nx) * dims.nz);
  for (int iz = 0; iz < dims.nz; ++iz) {
    const double z = origin_z + iz * cell_size;
    for (int ix = 0; ix < dims.nx; ++ix) {
      const double x = origin_x + ix * cell_size;
      double freq = noise.frequency;
      double weight = 1.0;
      double sum = 0.0;
      for (const auto& octave : octaves) {
        sum += weight * octave(x * freq, z * freq);
        freq *= noise.lacunarity;
        weight *= noise.gain;
      }
      elevations[static_cast<std::size_t>(iz) * dims.nx + ix] = noise.amplitude * sum;
    }
  }
  return Heightmap(dims, cell_size, origin_x, origin_z, seed, noise, std::move(elevations));
}

Heightmap heightmap_from_nodes(GridDims dims, double cell_size, double origin_x,
                               double origin_z, std::vector<double> elevations) {
  NoiseParams none;
  none.amplitude = 0.0;
  return Heightmap(dims, cell_size, origin_x, origin_z, 0, none, std::move(elevations));
}

double height_at(const Heightmap& hm, double x, double z) {
  check_inside(hm, x, z);
  return bilinear(hm, x, z);
}

Vec3 surface_normal(const Heightmap& hm, double x, double z) {
  check_inside(hm, x, z);
  const double e = 0.5 * hm.cell_size();
  const double x0 = std::max(x - e, hm.min_x());
  const double x1 = std::min(x + e, hm.max_x());
  const double z0 = std::max(z - e, hm.min_z());
  const double z1 = std::min(z + e, hm.max_z());
  const double dhdx = (bilinear(hm, x1, z) - bilinear(hm, x0, z)) / (x1 - x0);
  const double dhdz = (bilinear(hm, x, z1) - bilinear(hm, x, z0)) / (z1 - z0);
  return Vec3(-dhdx, 1.0, -dhdz).normalized();
}

double slope_angle(const Heightmap& hm, double x, double z) {
  return std::acos(std::clamp(surface_normal(hm, x, z).y(), -1.0, 1.0));
}

const char* to_string(HitTag tag) {
  switch (tag) {
    case HitTag::flower: return "flower";
    case HitTag::obstacle: return "obstacle";
    case HitTag::terrain: return "terrain";
  }
  return "unknown";
}

std::optional<double> raycast_sphere(const Vec3& origin, const Vec3& direction,
                                     const Vec3& center, double radius,
                                     double max_range) {
  const Vec3 oc = origin - center;
  const double c = oc.squaredNorm() - radius * radius;
  if (c <= 0.0) return 0.0;
  const double b = oc.dot(direction);
  if (b > 0.0) return std::nullopt;  // pointing away
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double t = -b - std::sqrt(disc);
  if (t < 0.0 || t > max_range) return std::nullopt;
  return t;
}

std::optional<double> raycast_spheres(std::span<const Sphere> spheres, const Vec3& origin,
                                      const Vec3& direction, double max_range) {
  std::optional<double> best;
  for (const auto& s : spheres) {
    if (auto t = raycast_sphere(origin, direction, s.center, s.radius, max_range)) {
      if (!best || *t < *best) best = t;
    }
  }
  return best;
}

std::optional<double> raycast_obstacles(std::span<const Obstacle> obstacles,
                                        const Vec3& origin, const Vec3& direction,
                                        double max_range) {
  std::optional<double> best;
  for (const auto& o : obstacles) {
    if (auto t = raycast_sphere(origin, direction, o.center, o.radius, max_range)) {
      if (!best || *t < *best) best = t;
    }
  }
  return best;
}

std::optional<double> raycast_terrain(const Heightmap& hm, const Vec3& origin,
                                      const Vec3& direction, double max_range) {
  auto below = [&](double t) {
    const Vec3 p = origin + t * direction;
    return hm.contains(p.x(), p.z()) && p.y() <= bilinear(hm, p.x(), p.z());
  };
  if (below(0.0)) return 0.0;

  const double step = 0.5 * hm.cell_size();
  double prev = 0.0;
  for (long k = 1;; ++k) {
    const double t = std::min(k * step, max_range);
    if (below(t)) {
      double lo = prev;
      double hi = t;
      for (int i = 0; i < 8; ++i) {
        const double mid = 0.5 * (lo + hi);
        (below(mid) ? hi : lo) = mid;
      }
      return hi;
    }
    if (t >= max_range) break;
    prev = t;
  }
  return std::nullopt;
}

std::optional<RayHit> raycast(const Heightmap& hm, std::span<const Obstacle> obstacles,
                              std::span<const Sphere> flowers, const Vec3& origin,
                              const Vec3& direction, double max_range) {
  std::optional<RayHit> best;
  auto consider = [&](std::optional<double> t, HitTag tag) {
    if (t && (!best || *t < best->distance)) best = RayHit{tag, *t};
  };
  consider(raycast_spheres(flowers, origin, direction, max_range), HitTag::flower);
  consider(raycast_obstacles(obstacles, origin, direction, max_range), HitTag::obstacle);
  consider(raycast_terrain(hm, origin, direction, max_range), HitTag::terrain);
  return best;
}

std::optional<Vec3> sample_valid_position(const Heightmap& hm,
                                          std::span<const Obstacle> obstacles,
                                          const Vec3& center, double radius,
                                          double max_slope, double clearance, Rng& rng,
                                          int max_attempts) {
  if (radius < 0.0) throw std::invalid_argument("sampling radius must be >= 0");
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const double theta = uniform(rng, 0.0, 2.0 * kPi);
    const double rho = radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double x = center.x() + rho * std::cos(theta);
    const double z = center.z() + rho * std::sin(theta);
    if (!hm.contains(x, z)) continue;
    if (slope_angle(hm, x, z) > max_slope) continue;
    const Vec3 p(x, bilinear(hm, x, z), z);
    const bool blocked = std::any_of(obstacles.begin(), obstacles.end(), [&](const Obstacle& o) {
      return (p - o.center).norm() < o.radius + clearance;
    });
    if (blocked) continue;
    return p;
  }
  return std::nullopt;
}

std::vector<Obstacle> shuffle_obstacles(std::span<const Vec3> pool, int k,
                                        std::span<const double> radii, Rng& rng) {
  if (k < 0 || static_cast<std::size_t>(k) > pool.size()) {
    throw std::invalid_argument("obstacle count exceeds the candidate pool");
  }
  if (radii.size() != pool.size()) {
    throw std::invalid_argument("obstacle pool and radii lengths differ");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: only the first k slots are needed.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<Obstacle> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    if (!(radii[order[i]] > 0.0)) throw std::invalid_argument("obstacle radius must be > 0");
    out.push_back(Obstacle{pool[order[i]], radii[order[i]]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text fixture format

namespace {
constexpr const char* kMagic = "COADAPT-HEIGHTMAP";
constexpr int kFormatVersion = 1;

void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) {
    throw std::runtime_error("heightmap file: expected '" + want + "', got '" + got + "'");
  }
}
}  // namespace

void write_heightmap(std::ostream& out, const Heightmap& hm) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "dims " << hm.nx() << ' ' << hm.nz() << '\n';
  out << "cell_size " << hm.cell_size() << '\n';
  out << "origin " << hm.origin_x() << ' ' << hm.origin_z() << '\n';
  out << "seed " << hm.seed() << '\n';
  const auto& n = hm.noise();
  out << "noise " << n.amplitude << ' ' << n.frequency << ' ' << n.octaves << ' ' << n.gain
      << ' ' << n.lacunarity << '\n';
  for (int iz = 0; iz < hm.nz(); ++iz) {
    for (int ix = 0; ix < hm.nx(); ++ix) {
      out << hm.node(ix, iz) << (ix + 1 < hm.nx() ? ' ' : '\n');
    }
  }
  out.flags(flags);
  out.precision(prec);
}

Heightmap read_heightmap(std::istream& in) {
  expect_token(in, kMagic);
  int version = 0;
  in >> version;
  if (version != kFormatVersion) {
    throw std::runtime_error("heightmap file: unsupported version " + std::to_string(version));
  }
  GridDims dims;
  double cell = 0.0, ox = 0.0, oz = 0.0;
  std::uint64_t seed = 0;
  NoiseParams noise;
  expect_token(in, "dims");
  in >> dims.nx >> dims.nz;
  expect_token(in, "cell_size");
  in >> cell;
  expect_token(in, "origin");
  in >> ox >> oz;
  expect_token(in, "seed");
  in >> seed;
  expect_token(in, "noise");
  in >> noise.amplitude >> noise.frequency >> noise.octaves >> noise.gain >> noise.lacunarity;
  if (!in) throw std::runtime_error("heightmap file: malformed header");
  check_grid(dims, cell);
  std::vector<double> elevations(static_cast<std::size_t>(dims.nx) * dims.nz);
  for (double& e : elevations) {
    if (!(in >> e)) throw std::runtime_error("heightmap file: truncated elevation grid");
  }
  return Heightmap(dims, cell, ox, oz, seed, noise, std::move(elevations));
}

void save_heightmap(const std::string& path, const Heightmap& hm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_heightmap(out, hm);
}

Heightmap load_heightmap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_heightmap(in);
}

}  // namespace coadapt::terrain
