#pragma once

#include <cstdint>
#include <string_view>

namespace hgnn {

// Counter-based splitmix64 stream. Self-contained so that every component
// (data generation, init, shuffling, dropout, random walks) produces the
// same numbers on any platform for a given seed.
class RngStream {
public:
  explicit RngStream(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    // 128-bit multiply rejection trick (Lemire); unbiased and portable.
    uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

private:
  uint64_t state_;
};

// Derives the seed of a named substream from a root seed. All randomness in
// the project flows from one root seed through these, so components can be
// reproduced in isolation.
inline uint64_t substream(uint64_t root, std::string_view name, uint64_t a = 0,
                          uint64_t b = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ root;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  h ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h *= 0xff51afd7ed558ccdULL;
  h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace hgnn
