#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "hiervid/check.hpp"

namespace hiervid {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash_str(std::string_view s) {
  // FNV-1a, used for sample-id hashing in seed derivation.
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// All randomness in the project flows from one u64 seed through named
// substreams: derive_seed(seed, "shuffle", stage, epoch) etc.
inline uint64_t derive_seed(uint64_t base, std::string_view stream, uint64_t a = 0,
                            uint64_t b = 0) {
  uint64_t x = base ^ hash_str(stream);
  splitmix64(x);
  x ^= 0x9e3779b97f4a7c15ull * (a + 1);
  splitmix64(x);
  x ^= 0xc2b2ae3d27d4eb4full * (b + 1);
  return splitmix64(x);
}

// xoshiro256**: small state, reproducible across platforms. The standard
// <random> distributions are not bit-stable across library implementations,
// so all draws below are hand-rolled.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    HV_REQUIRE(n > 0, "uniform_int: n must be positive, got ", n);
    return static_cast<int64_t>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<uint64_t>(n)) >>
                                64);
  }

  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class V>
  void shuffle(std::vector<V>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace hiervid
