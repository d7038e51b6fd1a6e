#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace corrnet {

/// FNV-1a hash of a label, mixed with a global seed. Used to derive
/// per-component seeds so that adding a component never perturbs the
/// streams of the others.
inline std::uint64_t seed_for(std::string_view label, std::uint64_t global_seed) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= global_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

/// Deterministic PRNG (splitmix64 core) with hand-rolled uniform and
/// normal variates, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  Rng(std::string_view label, std::uint64_t global_seed)
      : state_(seed_for(label, global_seed)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle of [first, last).
  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace corrnet
