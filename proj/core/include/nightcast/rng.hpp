#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nightcast {

// splitmix64. Chosen over std::mt19937 + std::distributions because the
// standard distributions are implementation-defined; this one produces the
// same stream on every platform, which the reproducibility contracts need.
struct Rng {
  std::uint64_t state = 0x9e3779b97f4a7c15ull;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Irwin-Hall sum of 12 uniforms; approximately standard normal and, unlike
  // Box-Muller, free of libm calls whose last bits differ across platforms.
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

// Stateless hash of a (seed, a, b, c) index tuple; used for noise fields that
// must be identical regardless of evaluation order.
inline std::uint64_t mix_u64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_index(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = seed;
  h = mix_u64(h ^ (a + 0x9e3779b97f4a7c15ull));
  h = mix_u64(h ^ (b + 0xc2b2ae3d27d4eb4full));
  h = mix_u64(h ^ (c + 0x165667b19e3779f9ull));
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Fans one experiment seed out to per-module streams.
inline std::uint64_t subseed(std::uint64_t seed, const std::string& name) {
  return mix_u64(seed ^ fnv1a(name));
}

}  // namespace nightcast
