// punctc/random.hpp — seeded RNG with hand-rolled draws.
//
// Every random draw in the toolkit funnels through Rng. Distributions are
// implemented on top of the raw mt19937_64 stream instead of <random>
// distribution objects, so a given seed produces the same sequence on every
// standard library.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "punctc/common.hpp"

namespace punctc {

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], both ends inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    ensure(lo <= hi, "uniform_int: empty range [", lo, ", ", hi, "]");
    uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t draw = static_cast<uint64_t>(uniform() * static_cast<double>(n));
    if (draw >= n) draw = n - 1;
    return lo + static_cast<int64_t>(draw);
  }

  size_t index(size_t n) {
    ensure(n > 0, "index: empty range");
    return static_cast<size_t>(uniform_int(0, static_cast<int64_t>(n) - 1));
  }

  // Standard normal via Box-Muller.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i)));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable mix for deriving stream seeds (e.g. per-epoch shuffles) from a base
// seed without correlating the streams.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace punctc
