#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace svt {

/// The single random engine used throughout. Every stochastic routine takes
/// one by reference so that a run is a pure function of its seed.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw, so the
/// sequence does not depend on the standard library's distribution code.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [0, n). n must be positive.
int uniform_index(Rng& rng, int n);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// Child seed for a named sub-stream. derive_seed(m, a, b) is
/// mix64(mix64(m ^ mix64(a)) ^ mix64(b)), folded left over the arguments.
inline std::uint64_t derive_seed(std::uint64_t master) { return mix64(master); }
template <class... Rest>
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t part, Rest... rest) {
  return derive_seed(mix64(master ^ mix64(part)), static_cast<std::uint64_t>(rest)...);
}
inline std::uint64_t seed_tag(std::string_view name) { return fnv1a64(name); }

}  // namespace svt
