#pragma once

#include <cmath>
#include <cstdint>

namespace needlets {

// Counter-based random streams.  Every draw is a pure function of
// (seed, counter words), so independent coefficients and replications can be
// generated in any order, on any thread, with identical results.
//
// The mixer is SplitMix64 applied to a running combination of the key words;
// normals come from Box-Muller on two mixed 64-bit words.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double to_unit_open(std::uint64_t u) {
  // (0, 1): top 53 bits, shifted off zero.
  return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// Combine key words into a single well-mixed 64-bit value.
inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a,
                             std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ a);
  h = detail::splitmix64(h ^ b);
  h = detail::splitmix64(h ^ c);
  return h;
}

// Replication r of a campaign draws from derive_seed(master, r).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t r) {
  return mix_key(master, 0x5eedULL, r);
}

// Standard normal pair addressed by (seed, a, b, c).
inline void normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                        std::uint64_t c, double& z0, double& z1) {
  const std::uint64_t k = mix_key(seed, a, b, c);
  const double u1 = detail::to_unit_open(detail::splitmix64(k));
  const double u2 = detail::to_unit_open(detail::splitmix64(k ^ 0xdeadbeefULL));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 6.283185307179586476925286766559 * u2;
  z0 = r * std::cos(t);
  z1 = r * std::sin(t);
}

}  // namespace needlets
