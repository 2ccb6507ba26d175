#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace treesb {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// A seeded random stream. Substreams are derived deterministically from the
/// parent seed and a name or index, never from the parent's current state, so
/// the set of draws a unit of work sees does not depend on scheduling.
class RandomStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  RandomStream substream(std::string_view name) const {
    return RandomStream(detail::splitmix64(seed_ ^ detail::fnv1a(name)));
  }
  RandomStream substream(std::uint64_t index) const {
    return RandomStream(detail::splitmix64(detail::splitmix64(seed_) + index));
  }

  engine_type& engine() noexcept { return engine_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    } while (u <= 0.0);
    return u;
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double exponential() { return -std::log(uniform()); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }
  bool bernoulli(double p) { return uniform() < p; }
  double gumbel() { return -std::log(-std::log(uniform())); }

 private:
  std::uint64_t seed_;
  engine_type engine_;
};

}  // namespace treesb
