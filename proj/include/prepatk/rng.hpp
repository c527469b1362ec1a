#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace prepatk {

/// Counter-based deterministic generator (splitmix64 stream). The draw
/// sequence depends only on the 64-bit seed, so identical seeds replay
/// bit-identically across runs and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0,1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Independent child stream; deterministic in (seed, stream).
  Rng fork(uint64_t stream) const {
    uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull + stream * 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Batch of unit-norm vectors, rotation invariant (normalized Gaussians).
std::vector<std::vector<double>> unit_sphere_sample(Rng& rng, int dim, int batch);

}  // namespace prepatk
