#ifndef FBP_RNG_HPP
#define FBP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace fbp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic random stream. The engine is the standard-specified
/// mt19937_64; the uniform and normal transforms are written out here so the
/// produced sequences are identical on every platform and compiler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  /// Uniform double in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double rho = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = rho * std::sin(theta);
    have_cached_ = true;
    return rho * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// Independent per-member stream: stream k of a base seed.
inline Rng member_stream(std::uint64_t seed, std::uint64_t k) {
  return Rng(splitmix64(seed) ^ splitmix64(0xA076'1D64'78BD'642Full * (k + 1)));
}

/// Independent per-replica base seed (for repeated studies on one seed).
inline std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t r) {
  return splitmix64(seed ^ (0xD1B5'4A32'D192'ED03ull * (r + 1)));
}

}  // namespace fbp

#endif
