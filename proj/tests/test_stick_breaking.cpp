#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "treesb/prior_moments.hpp"
#include "treesb/stick_breaking.hpp"

using namespace treesb;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Logistic, BasicValues) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
  EXPECT_NEAR(logistic(40.0), 1.0, 1e-15);
  RandomStream rng(3);
  for (int i = 0; i < 100; ++i) {
    const double z = 10.0 * rng.normal();
    EXPECT_NEAR(logistic(z) + logistic(-z), 1.0, 1e-15);
  }
  EXPECT_THROW(logistic(std::numeric_limits<double>::infinity()), InvalidArgument);
  EXPECT_THROW(logistic(std::nan("")), InvalidArgument);
}

TEST(SplitValues, ZeroCoefficientsGiveHalf) {
  const auto t = TreeTopology::balanced(8);
  const auto coeffs = SplitCoefficientSet::constant(t, Eigen::Vector2d::Zero());
  for (double v : split_values(t, coeffs, Eigen::Vector2d(1.0, 3.0))) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(SplitValues, InterceptOnly) {
  const auto t = TreeTopology::lopsided(2);
  const double logit07 = std::log(0.7 / 0.3);
  const auto coeffs = SplitCoefficientSet::constant(t, Eigen::VectorXd::Constant(1, logit07));
  EXPECT_NEAR(split_values(t, coeffs, Eigen::VectorXd::Ones(1))[0], 0.7, 1e-15);
}

TEST(SplitValues, ZeroFeatureIgnoresSlope) {
  const auto t = TreeTopology::lopsided(3);
  const auto a = SplitCoefficientSet::constant(t, Eigen::Vector2d(0.3, 5.0));
  const auto b = SplitCoefficientSet::constant(t, Eigen::Vector2d(0.3, -2.0));
  EXPECT_EQ(split_values(t, a, Eigen::Vector2d(1, 0)), split_values(t, b, Eigen::Vector2d(1, 0)));
  EXPECT_DOUBLE_EQ(split_values(t, a, Eigen::Vector2d(1, 0))[0], logistic(0.3));
}

TEST(SplitValues, DimensionMismatch) {
  const auto t = TreeTopology::lopsided(3);
  const auto a = SplitCoefficientSet::constant(t, Eigen::Vector2d(0.3, 5.0));
  EXPECT_THROW(split_values(t, a, Eigen::Vector3d(1, 0, 0)), InvalidArgument);
}

TEST(Weights, BalancedHalves) {
  const auto t = TreeTopology::balanced(4);
  const std::vector<double> v(3, 0.5);
  for (double w : weights_from_splits(t, v)) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Weights, LopsidedProducts) {
  const auto t = TreeTopology::lopsided(4);
  // Internal order: root, 1, 11.
  const std::vector<double> v{0.45, 0.6, 0.6};
  const auto w = weights_from_splits(t, v);
  EXPECT_NEAR(w[0], 0.45, 1e-15);
  EXPECT_NEAR(w[1], 0.33, 1e-15);
  EXPECT_NEAR(w[2], 0.132, 1e-15);
  EXPECT_NEAR(w[3], 0.088, 1e-15);
}

TEST(Weights, MissingSplitRejected) {
  const auto t = TreeTopology::lopsided(4);
  const std::vector<double> v{0.5, 0.5};
  EXPECT_THROW(weights_from_splits(t, v), InvalidArgument);
  const std::vector<double> bad{0.5, 1.5, 0.5};
  EXPECT_THROW(weights_from_splits(t, bad), InvalidArgument);
}

TEST(Weights, SimplexClosureForRandomSplits) {
  RandomStream rng(11);
  for (const auto& t : {TreeTopology::balanced(64), TreeTopology::lopsided(64), TreeTopology::lopsided(2)}) {
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> v(t.num_internal());
      for (auto& x : v) x = rng.uniform();
      const auto w = weights_from_splits(t, v);
      EXPECT_NEAR(sum(w), 1.0, 1e-12);
      for (double x : w) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(Weights, DeepLopsidedTreeDoesNotUnderflowToNaN) {
  const auto t = TreeTopology::lopsided(2000);
  std::vector<double> v(t.num_internal(), 0.5);
  const auto w = weights_from_splits(t, v);
  EXPECT_NEAR(sum(w), 1.0, 1e-12);
  for (double x : w) EXPECT_FALSE(std::isnan(x));
}

TEST(WeightsForCovariate, Examples) {
  const auto bt = TreeTopology::balanced(8);
  for (double w : weights_for_covariate(bt, SplitCoefficientSet::constant(bt, Eigen::Vector2d::Zero()),
                                        Eigen::Vector2d(1, 1)))
    EXPECT_DOUBLE_EQ(w, 0.125);
  const auto lt = TreeTopology::lopsided(2);
  const auto w = weights_for_covariate(lt, SplitCoefficientSet::constant(lt, Eigen::VectorXd::Zero(1)),
                                       Eigen::VectorXd::Ones(1));
  EXPECT_EQ(w, (std::vector<double>{0.5, 0.5}));
  RandomStream rng(5);
  const auto coeffs = SplitCoefficientSet::from_prior(bt, CoefficientPrior::isotropic(2, 0.0, 4.0), rng);
  EXPECT_EQ(weights_for_covariate(bt, coeffs, Eigen::Vector2d(1, 0.25)),
            weights_for_covariate(bt, coeffs, Eigen::Vector2d(1, 0.25)));
}

TEST(WeightsForCovariate, SwappingSameLevelCoefficientsPermutesBlocks) {
  const auto t = TreeTopology::balanced(8);
  RandomStream rng(8);
  const auto prior = CoefficientPrior::isotropic(2, 0.0, 2.0);
  const auto coeffs = SplitCoefficientSet::from_prior(t, prior, rng);
  // Swap nodes "0" and "1" (indices 1 and 2).
  std::vector<Eigen::VectorXd> swapped;
  for (std::size_t k = 0; k < t.num_internal(); ++k) swapped.push_back(coeffs[k]);
  std::swap(swapped[1], swapped[2]);
  // Swapping "0"'s subtree coefficients with "1"'s requires their descendants too.
  std::swap(swapped[3], swapped[5]);
  std::swap(swapped[4], swapped[6]);
  // With V_root = 0.5 the two halves swap exactly.
  swapped[0] = Eigen::Vector2d::Zero();
  std::vector<Eigen::VectorXd> base;
  for (std::size_t k = 0; k < t.num_internal(); ++k) base.push_back(coeffs[k]);
  base[0] = Eigen::Vector2d::Zero();
  const Eigen::Vector2d f(1, 0.7);
  const auto w = weights_for_covariate(t, SplitCoefficientSet(t, base, 2), f);
  const auto ws = weights_for_covariate(t, SplitCoefficientSet(t, swapped, 2), f);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(w[k], ws[k + 4], 1e-15);
    EXPECT_NEAR(w[k + 4], ws[k], 1e-15);
  }
}

TEST(CoefficientPrior, RejectsNonSpd) {
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  EXPECT_THROW(CoefficientPrior(Eigen::Vector2d::Zero(), bad), InvalidArgument);
  Eigen::Matrix2d asym;
  asym << 1, 0.1, 0.2, 1;
  EXPECT_THROW(CoefficientPrior(Eigen::Vector2d::Zero(), asym), InvalidArgument);
}

TEST(PriorSplits, IndependentAcrossNodes) {
  const auto t = TreeTopology::balanced(4);
  RandomStream rng(21);
  const auto draws = simulate_prior_weights(t, CoefficientPrior::isotropic(2, 0.0, 3.0), Eigen::Vector2d(1, 1),
                                            50000, rng);
  for (Eigen::Index a = 0; a < draws.splits.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < draws.splits.cols(); ++b) {
      PairMoments m;
      for (Eigen::Index i = 0; i < draws.splits.rows(); ++i) m.add(draws.splits(i, a), draws.splits(i, b));
      const auto c = m.correlation_estimate();
      EXPECT_LT(std::abs(c.value), 3.0 * c.std_error) << a << "," << b;
    }
  }
}
