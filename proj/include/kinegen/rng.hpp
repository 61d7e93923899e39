#pragma once

#include <cmath>
#include <cstdint>

namespace kinegen::rng {

// Counter-based randomness built on splitmix64. Every stochastic kernel in
// the library derives an independent stream from (seed, indices...), which
// makes parallel and serial execution produce identical results.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (b * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL));
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a) { return mix(seed, a); }

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix(mix(seed, a), b);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) {
  return mix(mix(mix(seed, a), b), c);
}

inline double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Small sequential generator for the cases that genuinely need a stream
// (shuffles, restart initialisation). State advances by splitmix64.
class Stream {
public:
  explicit Stream(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform in [0, 1).
  double next_unit() { return to_unit(next_u64()); }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  double next_gaussian() {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 <= 0.0) u1 = 5e-324;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

private:
  std::uint64_t state_;
};

// One standard-normal draw addressed by (seed, index); the per-point noise
// kernels use this so each point is independent of every other.
inline double gaussian_at(std::uint64_t seed, std::uint64_t index) {
  double u1 = to_unit(derive(seed, index, 0));
  double u2 = to_unit(derive(seed, index, 1));
  if (u1 <= 0.0) u1 = 5e-324;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

inline double unit_at(std::uint64_t seed, std::uint64_t index) {
  return to_unit(derive(seed, index));
}

}  // namespace kinegen::rng
