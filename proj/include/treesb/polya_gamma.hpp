#pragma once

#include <cmath>
#include <numbers>

#include "treesb/errors.hpp"
#include "treesb/random.hpp"

namespace treesb {

/// Parameters of the Polya-Gamma distribution PG(b, z) with integer shape.
class PGParams {
 public:
  PGParams(int shape, double tilt) : shape_(shape), tilt_(tilt) {
    if (shape < 1) throw InvalidArgument("Polya-Gamma shape must be a positive integer");
    if (!std::isfinite(tilt)) throw InvalidArgument("Polya-Gamma tilt must be finite");
  }
  int shape() const noexcept { return shape_; }
  double tilt() const noexcept { return tilt_; }

 private:
  int shape_;
  double tilt_;
};

namespace detail {

inline constexpr double kPgTruncation = 0.64;

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Coefficient n of the alternating series for the density of J*(1, z), using
// the small-x representation left of the truncation point.
inline double pg_series_term(int n, double x) {
  const double k = (n + 0.5) * std::numbers::pi;
  if (x > kPgTruncation) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double log_term = -1.5 * (std::log(0.5 * std::numbers::pi) + std::log(x)) + std::log(k) -
                          2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(log_term);
}

// Probability of the exponential-tail piece of the two-piece proposal.
inline double pg_tail_mass(double z) {
  const double t = kPgTruncation;
  const double fz = 0.125 * std::numbers::pi * std::numbers::pi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + std::log(std_normal_cdf(b));
  const double xa = x0 + z + std::log(std_normal_cdf(a));
  const double q_over_p = 4.0 / std::numbers::pi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse-Gaussian IG(1/z, 1) truncated to (0, t].
inline double pg_truncated_inverse_gaussian(double z, RandomStream& rng) {
  const double t = kPgTruncation;
  double x = t + 1.0;
  if (z < 1.0 / t) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      double y = rng.normal();
      y *= y;
      const double mu_y = mu * y;
      x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// One exact PG(1, tilt) draw by the alternating-series accept/reject method.
inline double sample_pg1(double tilt, RandomStream& rng) {
  const double z = 0.5 * std::abs(tilt);
  const double fz = 0.125 * std::numbers::pi * std::numbers::pi + 0.5 * z * z;
  const double tail_mass = pg_tail_mass(z);
  while (true) {
    const double x =
        rng.uniform() < tail_mass ? kPgTruncation + rng.exponential() / fz : pg_truncated_inverse_gaussian(z, rng);
    double s = pg_series_term(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= pg_series_term(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += pg_series_term(n, x);
        if (y > s) break;
      }
    }
  }
}

}  // namespace detail

/// Exact draw from PG(b, z); shapes above one are sums of independent PG(1, z).
inline double sample_pg(const PGParams& params, RandomStream& rng) {
  double total = 0.0;
  for (int k = 0; k < params.shape(); ++k) total += detail::sample_pg1(params.tilt(), rng);
  return total;
}

inline double pg_mean(const PGParams& params) {
  const double z = params.tilt();
  if (std::abs(z) < 1e-8) return params.shape() * 0.25;
  return params.shape() * std::tanh(0.5 * z) / (2.0 * z);
}

inline double pg_variance(const PGParams& params) {
  const double z = std::abs(params.tilt());
  if (z < 1e-4) return params.shape() / 24.0;
  const double c = std::cosh(0.5 * z);
  return params.shape() * (std::sinh(z) - z) / (4.0 * z * z * z * c * c);
}

}  // namespace treesb
