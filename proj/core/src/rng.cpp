#include "demosim/rng.hpp"

#include <cmath>

namespace demosim {

namespace {

// splitmix64 finalizer.
uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t mix_seed(uint64_t seed) { return mix64(seed); }

uint64_t mix_seed(uint64_t seed, uint64_t tag) { return mix64(mix64(seed) ^ tag); }

uint64_t mix_seed(uint64_t seed, uint64_t tag_a, uint64_t tag_b) {
  return mix64(mix64(mix64(seed) ^ tag_a) ^ tag_b);
}

uint64_t Rng::below(uint64_t n) {
  // Debiased multiply-shift; the rejection loop rarely runs.
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t x = next_u64();
    const auto wide = static_cast<__uint128_t>(x) * n;
    if (static_cast<uint64_t>(wide) >= threshold) {
      return static_cast<uint64_t>(wide >> 64);
    }
  }
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

}  // namespace demosim
