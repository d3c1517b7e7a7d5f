#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "adabins/common.hpp"

namespace adabins {

// splitmix64; used to derive independent stream seeds from (seed, index).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator with explicit bit-to-float mapping so every draw is
// bit-reproducible. State round-trips through text for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one value per call (no hidden spare, so state saves cleanly)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // [0, n)
  index_t uniform_int(index_t n) {
    if (n <= 0) throw UsageError("uniform_int: n must be positive");
    return static_cast<index_t>(next_u64() % static_cast<uint64_t>(n));
  }

  std::string save_state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw ConfigError("invalid RNG state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace adabins
