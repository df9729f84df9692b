#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace dynalab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Self-contained xoshiro256++ generator. We avoid <random> distributions so
// that draw counts and values are pinned by this code alone: every normal()
// consumes exactly two raw draws, every below() exactly one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = detail::splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two raw draws, no caching.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Lemire multiply-shift; slight bias is
  // negligible for n << 2^64 and keeps consumption at one draw.
  std::int64_t below(std::int64_t n) {
    return static_cast<std::int64_t>(
        (static_cast<unsigned __int128>(next()) *
         static_cast<unsigned __int128>(n)) >> 64);
  }

  // Derive an independent child generator for a named concern.
  Rng child(std::uint64_t tag) {
    std::uint64_t x = s_[0] ^ (tag * 0x9e3779b97f4a7c15ULL);
    return Rng(detail::splitmix64(x) ^ tag);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Stable seed derivation for a (seed, stream-name) pair. Used to give each
// concern of a run (env, exploration, updates, model, agent, eval) its own
// lineage so adding or removing one consumer never perturbs the others.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = seed ^ h;
  return detail::splitmix64(x);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::uint64_t index) {
  std::uint64_t x = derive_seed(seed, stream) ^ (index * 0xd1342543de82ef95ULL);
  return detail::splitmix64(x);
}

}  // namespace dynalab
