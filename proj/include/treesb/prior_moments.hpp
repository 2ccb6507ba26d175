#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "treesb/errors.hpp"
#include "treesb/random.hpp"
#include "treesb/stick_breaking.hpp"
#include "treesb/tree.hpp"

namespace treesb {

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Event probabilities under the base measure together with the cross-weight
/// sums a(x,x), a(x,x') and a(x',x').
struct MeasureMomentInputs {
  double p = 0.0;        // G0(A)
  double p_joint = 0.0;  // G0(A and A')
  double p2 = 0.0;       // G0(A')
  double a_xx = 1.0;
  double a_xxp = 1.0;
  double a_xpxp = 1.0;
};

struct MeasureMoments {
  double mean;
  double variance;
  double cov_sets;
  double cov_covariates;
  double corr_sets;
  double corr_covariates;
};

inline MeasureMoments measure_moments(const MeasureMomentInputs& in) {
  auto probability = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must be a probability");
  };
  probability(in.p, "p");
  probability(in.p2, "p2");
  probability(in.p_joint, "p_joint");
  if (in.p_joint > std::min(in.p, in.p2)) throw InvalidArgument("p_joint cannot exceed min(p, p2)");
  for (double a : {in.a_xx, in.a_xxp, in.a_xpxp}) {
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("cross-weight sums must lie in (0, 1]");
  }
  const std::array<std::pair<double, const char*>, 4> factors{
      {{in.p, "G0(A)"}, {1.0 - in.p, "1 - G0(A)"}, {in.p2, "G0(A')"}, {1.0 - in.p2, "1 - G0(A')"}}};
  for (const auto& [value, name] : factors) {
    if (value == 0.0) throw DomainError(std::string("correlation undefined: ") + name + " is zero");
  }
  const double spread = in.p - in.p * in.p;
  MeasureMoments out{};
  out.mean = in.p;
  out.variance = spread * in.a_xx;
  out.cov_sets = (in.p_joint - in.p * in.p2) * in.a_xx;
  out.cov_covariates = spread * in.a_xxp;
  // Set correlation depends on the base measure only.
  out.corr_sets = (in.p_joint - in.p * in.p2) / std::sqrt(in.p * (1.0 - in.p) * in.p2 * (1.0 - in.p2));
  out.corr_covariates = in.a_xxp / std::sqrt(in.a_xx * in.a_xpxp);
  return out;
}

namespace detail {

inline double a_lt_series(std::size_t terms, double ev_x, double ev_xp, double ev_xxp) {
  const double denom = ev_x + ev_xp - ev_xxp;
  if (denom == 0.0) throw DomainError("a_lt: zero denominator E V_x + E V_x' - E V_x V_x'");
  const double remain = 1.0 - ev_x - ev_xp + ev_xxp;
  return ev_xxp * (1.0 - std::pow(remain, static_cast<double>(terms))) / denom;
}

}  // namespace detail

/// Sum over K stick-breaking terms V_k prod_{l<k}(1 - V_l) with no remainder
/// leaf: the form stated for lopsided trees with identically distributed splits.
inline double a_lt_truncated(std::size_t K, double ev_x, double ev_xp, double ev_xxp) {
  if (K == 0) throw InvalidArgument("a_lt_truncated: K must be positive");
  return detail::a_lt_series(K, ev_x, ev_xp, ev_xxp);
}

/// Same sum for a K-leaf lopsided tree whose last leaf takes the remaining
/// stick: K - 1 broken-off terms plus the remainder.
inline double a_lt_finite(std::size_t K, double ev_x, double ev_xp, double ev_xxp) {
  if (K == 0) throw InvalidArgument("a_lt_finite: K must be positive");
  const double remain = 1.0 - ev_x - ev_xp + ev_xxp;
  const double tail = std::pow(remain, static_cast<double>(K - 1));
  return K == 1 ? 1.0 : detail::a_lt_series(K - 1, ev_x, ev_xp, ev_xxp) + tail;
}

inline double a_bt(std::size_t m, double ev_x, double ev_xp, double ev_xxp) {
  const double base = 1.0 - ev_x - ev_xp + 2.0 * ev_xxp;
  if (base < 0.0) throw DomainError("a_bt: negative base; split moments are inconsistent");
  return std::pow(base, static_cast<double>(m));
}

/// Floor on the cross-covariate correlation of a lopsided tree with K terms.
inline double lower_bound_lt(std::size_t K) {
  if (K == 0) throw InvalidArgument("lower_bound_lt: K must be positive");
  const double k = static_cast<double>(K);
  return (1.0 / 3.0) * (1.0 - std::pow(4.0, -k)) / (1.0 - std::pow(2.0, -k));
}

inline double lower_bound_bt(std::size_t m) { return std::pow(2.0, -static_cast<double>(m)); }

// ---------------------------------------------------------------------------
// Monte-Carlo machinery
// ---------------------------------------------------------------------------

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Raw power sums of a pair (x, y) up to total order four. Merging is plain
/// addition, so any partition of replicates merged in a fixed order gives a
/// reproducible result.
class PairMoments {
 public:
  void add(double x, double y) {
    double xp = 1.0;
    for (int a = 0; a <= 4; ++a) {
      double term = xp;
      for (int b = 0; a + b <= 4; ++b) {
        sums_[a][b] += term;
        term *= y;
      }
      xp *= x;
    }
  }

  void merge(const PairMoments& other) {
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; a + b <= 4; ++b) sums_[a][b] += other.sums_[a][b];
  }

  double count() const noexcept { return sums_[0][0]; }
  double mean_x() const { return sums_[1][0] / count(); }
  double mean_y() const { return sums_[0][1] / count(); }

  /// Central moment E[(x - mean_x)^a (y - mean_y)^b], a + b <= 4.
  double central(int a, int b) const {
    const double n = count();
    const double mx = mean_x();
    const double my = mean_y();
    double total = 0.0;
    for (int i = 0; i <= a; ++i) {
      for (int j = 0; j <= b; ++j) {
        total += binomial(a, i) * binomial(b, j) * (sums_[i][j] / n) * std::pow(-mx, a - i) * std::pow(-my, b - j);
      }
    }
    return total;
  }

  Estimate mean_x_estimate() const {
    return {mean_x(), std::sqrt(std::max(central(2, 0), 0.0) / count())};
  }

  /// Population variance of x with the delta-method standard error.
  Estimate variance_x_estimate() const {
    const double m2 = std::max(central(2, 0), 0.0);
    const double m4 = std::max(central(4, 0), 0.0);
    return {m2, std::sqrt(std::max(m4 - m2 * m2, 0.0) / count())};
  }

  /// Pearson correlation with a standard error from its influence function,
  /// which does not assume normality.
  Estimate correlation_estimate() const {
    const double vx = central(2, 0);
    const double vy = central(0, 2);
    if (!(vx > 0.0 && vy > 0.0)) return {1.0, 0.0};
    const double sx = std::sqrt(vx);
    const double sy = std::sqrt(vy);
    const double r = central(1, 1) / (sx * sy);
    const double e22 = central(2, 2) / (vx * vy);
    const double e31 = central(3, 1) / (vx * sx * sy);
    const double e13 = central(1, 3) / (sx * vy * sy);
    const double e40 = central(4, 0) / (vx * vx);
    const double e04 = central(0, 4) / (vy * vy);
    const double var_if = e22 - r * (e31 + e13) + 0.25 * r * r * (e40 + e04 + 2.0 * e22);
    return {r, std::sqrt(std::max(var_if, 0.0) / count())};
  }

 private:
  static double binomial(int n, int k) {
    static constexpr double table[5][5] = {
        {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};
    return table[n][k];
  }

  double sums_[5][5] = {};
};

/// Runs `body(stream, count)` over `streams` blocks that split `total`
/// replicates, each block on its own substream, and merges accumulators in
/// block order.
template <class Accumulator, class Body>
Accumulator partitioned_mc(std::size_t total, std::size_t streams, const RandomStream& rng, Body body) {
  if (streams == 0) streams = 1;
  Accumulator merged;
  for (std::size_t s = 0; s < streams; ++s) {
    const std::size_t begin = total * s / streams;
    const std::size_t end = total * (s + 1) / streams;
    auto sub = rng.substream(s);
    Accumulator part;
    body(sub, end - begin, part);
    merged.merge(part);
  }
  return merged;
}

/// First and second moments of the split proportions at two covariate
/// profiles under the logit-normal prior, with standard errors.
struct SplitMoments {
  Estimate ev_x;
  Estimate ev_xp;
  Estimate ev_xx;    // E V_x^2
  Estimate ev_xpxp;  // E V_x'^2
  Estimate ev_xxp;   // E V_x V_x'
};

namespace detail {

struct ScalarSums {
  double n = 0, s1 = 0, s2 = 0;
  void add(double v) {
    n += 1;
    s1 += v;
    s2 += v * v;
  }
  void merge(const ScalarSums& o) {
    n += o.n;
    s1 += o.s1;
    s2 += o.s2;
  }
  Estimate estimate() const {
    const double m = s1 / n;
    return {m, std::sqrt(std::max(s2 / n - m * m, 0.0) / n)};
  }
};

struct SplitSums {
  ScalarSums x, xp, xx, xpxp, xxp;
  void merge(const SplitSums& o) {
    x.merge(o.x);
    xp.merge(o.xp);
    xx.merge(o.xx);
    xpxp.merge(o.xpxp);
    xxp.merge(o.xxp);
  }
};

}  // namespace detail

inline SplitMoments ev_product_logitnormal(const CoefficientPrior& prior, const CovariateFeatures& fx,
                                           const CovariateFeatures& fxp, std::size_t n_mc, const RandomStream& rng,
                                           std::size_t streams = 1) {
  if (n_mc < 1000) throw InvalidArgument("ev_product_logitnormal: n_mc must be at least 1000");
  if (fx.size() != prior.dim() || fxp.size() != prior.dim()) {
    throw InvalidArgument("feature length does not match the coefficient prior");
  }
  const auto sums = partitioned_mc<detail::SplitSums>(n_mc, streams, rng, [&](RandomStream& s, std::size_t count,
                                                                                detail::SplitSums& acc) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto g = prior.draw(s);
      const double v = logistic(fx.dot(g));
      const double vp = logistic(fxp.dot(g));
      acc.x.add(v);
      acc.xp.add(vp);
      acc.xx.add(v * v);
      acc.xpxp.add(vp * vp);
      acc.xxp.add(v * vp);
    }
  });
  return {sums.x.estimate(), sums.xp.estimate(), sums.xx.estimate(), sums.xpxp.estimate(), sums.xxp.estimate()};
}

/// Cross-covariate correlation of the random measures implied by given split
/// moments: a(x,x') / sqrt(a(x,x) a(x',x')), with the finite K-leaf tree.
inline double corr_closed_form(TreeKind kind, std::size_t K, const SplitMoments& m) {
  const double ex = m.ev_x.value, exp_ = m.ev_xp.value;
  switch (kind) {
    case TreeKind::Balanced: {
      const auto depth = static_cast<std::size_t>(std::log2(static_cast<double>(K)) + 0.5);
      return a_bt(depth, ex, exp_, m.ev_xxp.value) /
             std::sqrt(a_bt(depth, ex, ex, m.ev_xx.value) * a_bt(depth, exp_, exp_, m.ev_xpxp.value));
    }
    case TreeKind::Lopsided:
      return a_lt_finite(K, ex, exp_, m.ev_xxp.value) /
             std::sqrt(a_lt_finite(K, ex, ex, m.ev_xx.value) * a_lt_finite(K, exp_, exp_, m.ev_xpxp.value));
    case TreeKind::Custom: break;
  }
  throw InvalidArgument("closed-form correlation is available for lopsided and balanced trees only");
}

/// Which leaves of a lopsided tree enter a cross-weight sum.
enum class LopsidedConvention {
  Finite,     // K-leaf tree, last leaf holds the remaining stick
  Truncated,  // K broken-off pieces, remainder discarded
};

/// Monte-Carlo estimate of a(x,x') = sum over leaves of E[W_x W_x'] under the
/// logit-normal prior.
inline Estimate mc_cross_weight_sum(TreeKind kind, std::size_t K, const CoefficientPrior& prior,
                                    const CovariateFeatures& fx, const CovariateFeatures& fxp, std::size_t n_mc,
                                    const RandomStream& rng, LopsidedConvention convention = LopsidedConvention::Finite,
                                    std::size_t streams = 1) {
  const bool truncated = kind == TreeKind::Lopsided && convention == LopsidedConvention::Truncated;
  const auto tree = TreeTopology::build(kind, truncated ? K + 1 : K);
  const std::size_t used = truncated ? K : tree.num_leaves();
  const auto sums = partitioned_mc<detail::ScalarSums>(n_mc, streams, rng, [&](RandomStream& s, std::size_t count,
                                                                                 detail::ScalarSums& acc) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto coeffs = SplitCoefficientSet::from_prior(tree, prior, s);
      const auto wx = weights_for_covariate(tree, coeffs, fx);
      const auto wxp = weights_for_covariate(tree, coeffs, fxp);
      double total = 0.0;
      for (std::size_t k = 0; k < used; ++k) total += wx[k] * wxp[k];
      acc.add(total);
    }
  });
  return sums.estimate();
}

namespace detail {

struct MeasureSums {
  PairMoments pair;
  void merge(const MeasureSums& o) { pair.merge(o.pair); }
};

}  // namespace detail

/// Simulates (G_x(A), G_x'(A)) pairs: coefficients from the prior, weights at
/// both profiles, and independent Bernoulli(p) atom-membership indicators per
/// leaf. Returns the accumulated moments of the pair.
inline PairMoments mc_measure_pairs(TreeKind kind, std::size_t K, const CoefficientPrior& prior,
                                    const CovariateFeatures& fx, const CovariateFeatures& fxp, double p,
                                    std::size_t n_mc, const RandomStream& rng, std::size_t streams = 1) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("event probability must lie strictly between 0 and 1");
  if (fx.size() != prior.dim() || fxp.size() != prior.dim()) {
    throw InvalidArgument("feature length does not match the coefficient prior");
  }
  const auto tree = TreeTopology::build(kind, K);
  const auto sums = partitioned_mc<detail::MeasureSums>(n_mc, streams, rng, [&](RandomStream& s, std::size_t count,
                                                                                  detail::MeasureSums& acc) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto coeffs = SplitCoefficientSet::from_prior(tree, prior, s);
      const auto wx = weights_for_covariate(tree, coeffs, fx);
      const auto wxp = weights_for_covariate(tree, coeffs, fxp);
      double gx = 0.0, gxp = 0.0;
      for (std::size_t k = 0; k < tree.num_leaves(); ++k) {
        if (s.bernoulli(p)) {
          gx += wx[k];
          gxp += wxp[k];
        }
      }
      acc.pair.add(gx, gxp);
    }
  });
  return sums.pair;
}

inline Estimate mc_corr_measures(TreeKind kind, std::size_t K, const CoefficientPrior& prior,
                                 const CovariateFeatures& fx, const CovariateFeatures& fxp, double p, std::size_t n_mc,
                                 const RandomStream& rng, std::size_t streams = 1) {
  return mc_measure_pairs(kind, K, prior, fx, fxp, p, n_mc, rng, streams).correlation_estimate();
}

/// Prior draws of split values and leaf weights at one covariate profile.
struct PriorWeightDraws {
  Eigen::MatrixXd splits;   // draws x internal nodes
  Eigen::MatrixXd weights;  // draws x leaves
};

inline PriorWeightDraws simulate_prior_weights(const TreeTopology& tree, const CoefficientPrior& prior,
                                               const CovariateFeatures& feats, std::size_t n_draws,
                                               RandomStream& rng) {
  PriorWeightDraws out{Eigen::MatrixXd(n_draws, tree.num_internal()), Eigen::MatrixXd(n_draws, tree.num_leaves())};
  for (std::size_t i = 0; i < n_draws; ++i) {
    const auto coeffs = SplitCoefficientSet::from_prior(tree, prior, rng);
    const auto v = split_values(tree, coeffs, feats);
    const auto w = weights_from_splits(tree, v);
    for (std::size_t k = 0; k < v.size(); ++k) out.splits(i, k) = v[k];
    for (std::size_t k = 0; k < w.size(); ++k) out.weights(i, k) = w[k];
  }
  return out;
}

}  // namespace treesb
