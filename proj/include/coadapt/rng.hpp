#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coadapt {

using Rng = std::mt19937_64;

// Seed splitting. Every random stream in a run is derived from the master
// seed as splitmix64(splitmix64(master ^ fnv1a(stream)) + index), so streams
// named differently (or indexed differently) never share state.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_hash(std::string_view stream);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace coadapt
