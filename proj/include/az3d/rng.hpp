#pragma once

#include <cmath>
#include <cstdint>

namespace az3d {

// Counter-based generator: every draw is a pure function of (key, stream, counter),
// so noise for anchor i at iteration t does not depend on evaluation order.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t counter_hash(uint64_t key, uint64_t stream, uint64_t counter) {
  return mix64(mix64(mix64(key) ^ stream) ^ counter);
}

/// Uniform in [0, 1) with 53 random bits.
inline double counter_uniform(uint64_t key, uint64_t stream, uint64_t counter) {
  return static_cast<double>(counter_hash(key, stream, counter) >> 11) * 0x1.0p-53;
}

/// Uniform in (-0.5, 0.5].
inline double counter_centered(uint64_t key, uint64_t stream, uint64_t counter) {
  return static_cast<double>((counter_hash(key, stream, counter) >> 11) + 1) * 0x1.0p-53 - 0.5;
}

/// Sequential convenience wrapper over the counter hash.
class CounterRng {
 public:
  explicit CounterRng(uint64_t key, uint64_t stream = 0) : key_(key), stream_(stream) {}

  uint64_t next_u64() { return counter_hash(key_, stream_, counter_++); }
  double uniform() { return counter_uniform(key_, stream_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller on two consecutive draws.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t key_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

}  // namespace az3d
