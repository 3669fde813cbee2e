// Deterministic splittable RNG: every replicate gets its own stream derived from
// (seed, index, salt), so draws never depend on thread schedule or platform.
// Normal variates use the inverse CDF (AS 241) rather than std::normal_distribution,
// whose algorithm the standard leaves unspecified.
#pragma once

#include <cstdint>

#include "medprod/common.hpp"

namespace medprod {

inline std::uint64_t mix64(std::uint64_t z) {  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
  std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ull);
  h = mix64(h ^ (index + 0x9E3779B97F4A7C15ull));
  h = mix64(h ^ (salt + 0xD1B54A32D192ED03ull));
  return h;
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform on the open interval (0,1); never returns an exact 0 or 1.
  double next_unit() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return norm_quantile(next_unit()); }

  bool bernoulli(double p) { return next_unit() < p; }

  // Unbiased-to-2^-64 index in [0, n); Lemire-style multiply-shift.
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Marsaglia–Tsang for shape >= 1, boosted for shape < 1.
  double gamma(double shape, double scale) {
    require(shape > 0.0 && scale > 0.0, errc::invalid_argument, "gamma: shape and scale must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0, scale);
      return g * std::pow(next_unit(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_unit();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace medprod
