#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "treesb/errors.hpp"
#include "treesb/prior_moments.hpp"
#include "treesb/stick_breaking.hpp"
#include "treesb/tree.hpp"

namespace treesb {

/// 1 - |shared co-clustered pairs| / |pairs co-clustered in either|, computed
/// from the contingency table. Zero when neither clustering has a pair.
template <class LabelA, class LabelB>
double jaccard_distance(std::span<const LabelA> a, std::span<const LabelB> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("clusterings have different lengths (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  std::map<LabelA, double> count_a;
  std::map<LabelB, double> count_b;
  std::map<std::pair<LabelA, LabelB>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    count_a[a[i]] += 1;
    count_b[b[i]] += 1;
    joint[{a[i], b[i]}] += 1;
  }
  auto pairs = [](double n) { return n * (n - 1) / 2; };
  double pa = 0, pb = 0, both = 0;
  for (const auto& [_, n] : count_a) pa += pairs(n);
  for (const auto& [_, n] : count_b) pb += pairs(n);
  for (const auto& [_, n] : joint) both += pairs(n);
  const double either = pa + pb - both;
  return either == 0.0 ? 0.0 : 1.0 - both / either;
}

template <class LabelA, class LabelB>
double jaccard_distance(const std::vector<LabelA>& a, const std::vector<LabelB>& b) {
  return jaccard_distance(std::span<const LabelA>(a), std::span<const LabelB>(b));
}

/// Sorts each draw's weights in decreasing order; output is indexed by rank.
inline std::vector<std::vector<double>> posthoc_sort(std::vector<std::vector<double>> draws) {
  for (auto& w : draws) std::sort(w.begin(), w.end(), std::greater<>());
  return draws;
}

struct IntervalSummary {
  double level = 0.95;
  std::vector<double> lower;
  std::vector<double> median;
  std::vector<double> upper;
};

namespace detail {

// 1-based order statistic ceil(q * n), clamped to [1, n]. A small slack keeps
// q * n that is an integer up to rounding from jumping to the next index.
inline std::size_t order_index(double q, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace detail

/// Equal-tailed pointwise intervals from order statistics: lower, median and
/// upper are the ceil(a/2 n)-th, ceil(n/2)-th and ceil((1 - a/2) n)-th
/// smallest values, a = 1 - level. `values[draw][index]`.
inline IntervalSummary pointwise_ci(const std::vector<std::vector<double>>& values, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("interval level must lie in (0, 1)");
  if (values.size() < 2) throw InvalidArgument("intervals need at least two draws");
  const auto n = values.size();
  const auto width = values.front().size();
  for (const auto& row : values) {
    if (row.size() != width) throw InvalidArgument("draws have different lengths");
  }
  const double alpha = 1.0 - level;
  const auto lo = detail::order_index(alpha / 2.0, n) - 1;
  const auto mid = detail::order_index(0.5, n) - 1;
  const auto hi = detail::order_index(1.0 - alpha / 2.0, n) - 1;
  IntervalSummary out;
  out.level = level;
  std::vector<double> column(n);
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = values[i][j];
    std::sort(column.begin(), column.end());
    out.lower.push_back(column[lo]);
    out.median.push_back(column[mid]);
    out.upper.push_back(column[hi]);
  }
  return out;
}

/// Result of summarizing weights after post-hoc sorting. Sorting only undoes
/// label switching under strong assumptions, so the summary flags draws whose
/// rank-wise medians disagree with the rank-ordered raw medians by more than
/// the sorted interval width and by more than `tolerance`.
struct SortedWeightSummary {
  IntervalSummary sorted;
  bool warning = false;
  std::string message;
};

inline SortedWeightSummary summarize_sorted_weights(const std::vector<std::vector<double>>& draws, double level,
                                                    double tolerance = 0.01) {
  SortedWeightSummary out;
  const auto raw = pointwise_ci(draws, level);
  out.sorted = pointwise_ci(posthoc_sort(draws), level);
  auto raw_medians = raw.median;
  std::sort(raw_medians.begin(), raw_medians.end(), std::greater<>());
  for (std::size_t r = 0; r < raw_medians.size(); ++r) {
    const double width = out.sorted.upper[r] - out.sorted.lower[r];
    const double gap = std::abs(raw_medians[r] - out.sorted.median[r]);
    if (gap > width && gap > tolerance) {
      out.warning = true;
      out.message = "sorted and unsorted median weights disagree at rank " + std::to_string(r + 1) + " by " +
                    std::to_string(gap) + " (sorted interval width " + std::to_string(width) +
                    "); label switching may not be resolved by sorting";
      break;
    }
  }
  return out;
}

/// Per draw and leaf, W_{a,leaf} - W_{b,leaf} from that draw's coefficients.
inline std::vector<std::vector<double>> covariate_effect_differences(const TreeTopology& tree,
                                                                     std::span<const SplitCoefficientSet> draws,
                                                                     const CovariateFeatures& profile_a,
                                                                     const CovariateFeatures& profile_b) {
  if (profile_a.size() != profile_b.size()) throw InvalidArgument("profiles have different feature lengths");
  std::vector<std::vector<double>> out;
  out.reserve(draws.size());
  for (const auto& coeffs : draws) {
    const auto wa = weights_for_covariate(tree, coeffs, profile_a);
    const auto wb = weights_for_covariate(tree, coeffs, profile_b);
    std::vector<double> diff(wa.size());
    for (std::size_t k = 0; k < wa.size(); ++k) diff[k] = wa[k] - wb[k];
    out.push_back(std::move(diff));
  }
  return out;
}

struct VarianceDecayRow {
  NodeId leaf;
  Estimate variance;
  std::optional<double> bound;  // lopsided trees only
};

/// Empirical Var(W_k) per leaf next to the bound prod E(1 - V_l)^2 over the
/// right turns on the leaf's path, with E(1 - V_l)^2 estimated from the split
/// draws. `weights` is draws x leaves, `splits` draws x internal nodes.
inline std::vector<VarianceDecayRow> variance_decay_report(const TreeTopology& tree, const Eigen::MatrixXd& weights,
                                                           const Eigen::MatrixXd& splits) {
  if (weights.cols() != static_cast<Eigen::Index>(tree.num_leaves()) ||
      splits.cols() != static_cast<Eigen::Index>(tree.num_internal()) || weights.rows() != splits.rows()) {
    throw InvalidArgument("variance decay report: draw matrices do not match the tree");
  }
  std::vector<double> right_moment(tree.num_internal());
  for (std::size_t k = 0; k < tree.num_internal(); ++k) {
    right_moment[k] = (1.0 - splits.col(k).array()).square().mean();
  }
  std::vector<VarianceDecayRow> rows;
  for (std::size_t k = 0; k < tree.num_leaves(); ++k) {
    PairMoments m;
    for (Eigen::Index i = 0; i < weights.rows(); ++i) m.add(weights(i, k), 0.0);
    VarianceDecayRow row{tree.leaf(k), m.variance_x_estimate(), std::nullopt};
    if (tree.kind() == TreeKind::Lopsided) {
      double bound = 1.0;
      for (const auto& step : tree.path(k)) {
        if (step.digit == 1) bound *= right_moment[step.node];
      }
      row.bound = bound;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace treesb
