#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace demosim {

// Stateless 64-bit mixer used to derive independent stream seeds from a base
// seed plus any number of tags. Two calls with the same inputs always agree.
uint64_t mix_seed(uint64_t seed);
uint64_t mix_seed(uint64_t seed, uint64_t tag);
uint64_t mix_seed(uint64_t seed, uint64_t tag_a, uint64_t tag_b);

// Deterministic random source. The engine sequence is pinned by the language
// standard; the distribution transforms below are implemented here because
// the standard library's are implementation defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix_seed(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n);

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates shuffle driven by below(), so the permutation is portable.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace demosim
