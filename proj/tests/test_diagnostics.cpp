#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "treesb/diagnostics.hpp"

using namespace treesb;

namespace {

// Co-clustered pairs by direct enumeration.
std::set<std::pair<std::size_t, std::size_t>> pairs_of(const std::vector<int>& c) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      if (c[i] == c[j]) out.emplace(i, j);
  return out;
}

double brute_jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  const auto pa = pairs_of(a), pb = pairs_of(b);
  std::size_t both = 0;
  for (const auto& p : pa) both += pb.count(p);
  const std::size_t either = pa.size() + pb.size() - both;
  return either == 0 ? 0.0 : 1.0 - static_cast<double>(both) / static_cast<double>(either);
}

std::vector<int> random_clustering(std::size_t n, int labels, RandomStream& rng) {
  std::vector<int> c(n);
  for (auto& x : c) x = static_cast<int>(rng.uniform() * labels);
  return c;
}

}  // namespace

TEST(Jaccard, Examples) {
  const std::vector<int> a{1, 1, 2, 2}, b{1, 2, 1, 2};
  EXPECT_DOUBLE_EQ(jaccard_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(jaccard_distance(a, b), 1.0);
  EXPECT_NEAR(jaccard_distance(std::vector<int>{1, 1, 1}, std::vector<int>{1, 1, 2}), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(jaccard_distance(std::vector<int>{1, 2, 3}, std::vector<int>{4, 5, 6}), 0.0);
  EXPECT_THROW(jaccard_distance(std::vector<int>{1, 2}, std::vector<int>{1}), InvalidArgument);
}

TEST(Jaccard, MixedLabelTypes) {
  const std::vector<std::size_t> leaves{3, 3, 0, 0};
  const std::vector<int> truth{7, 7, 1, 1};
  EXPECT_DOUBLE_EQ(jaccard_distance(leaves, truth), 0.0);
}

TEST(Jaccard, PseudometricAgainstBruteForce) {
  RandomStream rng(1);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rep % 9;
    const auto a = random_clustering(n, 3, rng), b = random_clustering(n, 3, rng), c = random_clustering(n, 4, rng);
    EXPECT_NEAR(jaccard_distance(a, b), brute_jaccard(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(jaccard_distance(a, b), jaccard_distance(b, a));
    EXPECT_LE(jaccard_distance(a, c), jaccard_distance(a, b) + jaccard_distance(b, c) + 1e-12);
    auto relabeled = a;
    for (auto& x : relabeled) x = 10 - x;
    EXPECT_DOUBLE_EQ(jaccard_distance(a, relabeled), 0.0);
  }
}

TEST(PosthocSort, Examples) {
  const auto s = posthoc_sort({{0.2, 0.5, 0.3}, {0.5, 0.3, 0.2}});
  EXPECT_EQ(s[0], (std::vector<double>{0.5, 0.3, 0.2}));
  EXPECT_EQ(s[1], (std::vector<double>{0.5, 0.3, 0.2}));
}

TEST(PosthocSort, PermutedDrawsGiveZeroWidthIntervals) {
  std::vector<double> base{0.1, 0.4, 0.2, 0.3};
  std::vector<std::vector<double>> draws;
  RandomStream rng(2);
  for (int i = 0; i < 50; ++i) {
    std::shuffle(base.begin(), base.end(), rng.engine());
    draws.push_back(base);
  }
  const auto ci = pointwise_ci(posthoc_sort(draws), 0.95);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(ci.lower[r], ci.upper[r]);
  // Sorting is invariant to any permutation inside a draw.
  auto permuted = draws;
  for (auto& d : permuted) std::reverse(d.begin(), d.end());
  EXPECT_EQ(posthoc_sort(draws), posthoc_sort(permuted));
}

TEST(PointwiseCi, OrderStatistics) {
  std::vector<std::vector<double>> constant(20, std::vector<double>{3.5});
  const auto c = pointwise_ci(constant, 0.9);
  EXPECT_EQ(c.lower[0], 3.5);
  EXPECT_EQ(c.median[0], 3.5);
  EXPECT_EQ(c.upper[0], 3.5);

  std::vector<std::vector<double>> values;
  for (int v = 1000; v >= 1; --v) values.push_back({static_cast<double>(v)});
  const auto ci = pointwise_ci(values, 0.95);
  EXPECT_EQ(ci.lower[0], 25.0);
  EXPECT_EQ(ci.upper[0], 975.0);
  const auto wide = pointwise_ci(values, 0.99);
  EXPECT_LE(wide.lower[0], ci.lower[0]);
  EXPECT_GE(wide.upper[0], ci.upper[0]);
  EXPECT_LE(ci.lower[0], ci.median[0]);
  EXPECT_LE(ci.median[0], ci.upper[0]);

  EXPECT_THROW(pointwise_ci({{1.0}}, 0.95), InvalidArgument);
  EXPECT_THROW(pointwise_ci(values, 1.0), InvalidArgument);
}

TEST(SortedSummary, WarnsWhenLabelsSwitch) {
  // Two leaves that swap between draws: raw medians are both 0.5-ish while
  // sorted medians are 0.8 / 0.2.
  std::vector<std::vector<double>> draws;
  for (int i = 0; i < 100; ++i) draws.push_back(i % 2 ? std::vector<double>{0.8, 0.2} : std::vector<double>{0.2, 0.8});
  const auto s = summarize_sorted_weights(draws, 0.95);
  EXPECT_TRUE(s.warning);
  EXPECT_FALSE(s.message.empty());
  std::vector<std::vector<double>> stable(100, std::vector<double>{0.7, 0.3});
  EXPECT_FALSE(summarize_sorted_weights(stable, 0.95).warning);
}

TEST(EffectDifferences, EqualProfilesGiveZero) {
  const auto t = TreeTopology::balanced(8);
  RandomStream rng(3);
  std::vector<SplitCoefficientSet> draws;
  for (int i = 0; i < 20; ++i) draws.push_back(SplitCoefficientSet::from_prior(t, CoefficientPrior::isotropic(2, 0, 3), rng));
  const Eigen::Vector2d a(1.0, 1.0), b(1.0, 0.0);
  for (const auto& row : covariate_effect_differences(t, draws, a, a))
    for (double x : row) EXPECT_EQ(x, 0.0);
  for (const auto& row : covariate_effect_differences(t, draws, a, b))
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 0.0, 1e-12);
  EXPECT_THROW(covariate_effect_differences(t, draws, a, Eigen::Vector3d(1, 0, 0)), InvalidArgument);
}

TEST(EffectDifferences, SignBySubtree) {
  const auto t = TreeTopology::balanced(4);
  std::vector<Eigen::VectorXd> coeffs(3, Eigen::Vector2d::Zero());
  coeffs[0] = Eigen::Vector2d(0.0, 1.5);
  const std::vector<SplitCoefficientSet> draws{SplitCoefficientSet(t, coeffs, 2)};
  const auto diff = covariate_effect_differences(t, draws, Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0))[0];
  EXPECT_GT(diff[0], 0.0);
  EXPECT_GT(diff[1], 0.0);
  EXPECT_LT(diff[2], 0.0);
  EXPECT_LT(diff[3], 0.0);
}

TEST(VarianceDecay, DegenerateSplits) {
  const auto t = TreeTopology::lopsided(5);
  const Eigen::MatrixXd splits = Eigen::MatrixXd::Constant(100, 4, 0.5);
  Eigen::MatrixXd weights(100, 5);
  const std::vector<double> v(4, 0.5);
  const auto w = weights_from_splits(t, v);
  for (Eigen::Index i = 0; i < 100; ++i)
    for (Eigen::Index k = 0; k < 5; ++k) weights(i, k) = w[k];
  for (const auto& row : variance_decay_report(t, weights, splits)) {
    EXPECT_NEAR(row.variance.value, 0.0, 1e-15);
    ASSERT_TRUE(row.bound.has_value());
    EXPECT_GT(*row.bound, 0.0);
  }
}

TEST(VarianceDecay, PriorBoundHoldsAndDecreases) {
  const auto t = TreeTopology::lopsided(10);
  RandomStream rng(4);
  const auto draws = simulate_prior_weights(t, CoefficientPrior::isotropic(1, 0.0, 1.0), Eigen::VectorXd::Ones(1),
                                            100000, rng);
  const auto rows = variance_decay_report(t, draws.weights, draws.splits);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_LE(rows[k].variance.value, *rows[k].bound + 3 * rows[k].variance.std_error) << k;
    // Leaf k (k < K - 1) has k right turns; the last two leaves share a count.
    if (k > 0 && k + 1 < rows.size()) EXPECT_LT(*rows[k].bound, *rows[k - 1].bound);
  }
  const auto bt = TreeTopology::balanced(8);
  const auto bt_draws = simulate_prior_weights(bt, CoefficientPrior::isotropic(1, 0.0, 1.0), Eigen::VectorXd::Ones(1),
                                               1000, rng);
  for (const auto& row : variance_decay_report(bt, bt_draws.weights, bt_draws.splits)) EXPECT_FALSE(row.bound);
}
