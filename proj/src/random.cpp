#include "svt/random.hpp"

#include <cassert>

namespace svt {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_index(Rng& rng, int n) {
  assert(n > 0);
  // Lemire's multiply-shift; bias is below 2^-32 for the small n used here.
  const auto r = static_cast<std::uint32_t>(rng() >> 32);
  return static_cast<int>((static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(n)) >> 32);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace svt
