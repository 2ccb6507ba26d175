#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "treesb/errors.hpp"
#include "treesb/random.hpp"
#include "treesb/tree.hpp"

namespace treesb {

/// Covariate feature vector psi(x); one entry per regression coefficient.
using CovariateFeatures = Eigen::VectorXd;
/// Split proportion per internal node, indexed like TreeTopology::internal_nodes().
using SplitValues = std::vector<double>;
/// Leaf weight per leaf, indexed like TreeTopology::leaves().
using WeightVector = std::vector<double>;

inline double logistic(double z) {
  if (!std::isfinite(z)) throw InvalidArgument("logistic: non-finite input");
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Gaussian prior N(mean, covariance) shared by every node's split coefficients.
class CoefficientPrior {
 public:
  CoefficientPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size()) {
      throw InvalidArgument("coefficient prior: covariance must be " + std::to_string(mean_.size()) + "x" +
                            std::to_string(mean_.size()));
    }
    if (mean_.size() == 0) throw InvalidArgument("coefficient prior: dimension must be positive");
    if (!covariance_.isApprox(covariance_.transpose(), 1e-12)) {
      throw InvalidArgument("coefficient prior: covariance is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success) throw InvalidArgument("coefficient prior: covariance is not positive definite");
    lower_ = llt.matrixL();
    precision_ = llt.solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
    precision_ = 0.5 * (precision_ + precision_.transpose());
    precision_mean_ = precision_ * mean_;
  }

  static CoefficientPrior isotropic(std::size_t dim, double mean, double variance) {
    const auto r = static_cast<Eigen::Index>(dim);
    return CoefficientPrior(Eigen::VectorXd::Constant(r, mean), variance * Eigen::MatrixXd::Identity(r, r));
  }

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  const Eigen::VectorXd& precision_mean() const noexcept { return precision_mean_; }

  Eigen::VectorXd draw(RandomStream& rng) const {
    Eigen::VectorXd z(dim());
    for (Eigen::Index r = 0; r < dim(); ++r) z[r] = rng.normal();
    return mean_ + lower_ * z;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd precision_;
  Eigen::VectorXd precision_mean_;
};

/// Logit-normal regression coefficients, one vector per internal node.
class SplitCoefficientSet {
 public:
  SplitCoefficientSet(const TreeTopology& tree, std::vector<Eigen::VectorXd> coefficients, Eigen::Index dim)
      : dim_(dim), coefficients_(std::move(coefficients)) {
    if (coefficients_.size() != tree.num_internal()) {
      throw InvalidArgument("coefficient set needs one vector per internal node (" +
                            std::to_string(tree.num_internal()) + "), got " + std::to_string(coefficients_.size()));
    }
    for (const auto& g : coefficients_) {
      if (g.size() != dim_) throw InvalidArgument("coefficient vectors must all have length " + std::to_string(dim_));
    }
  }

  static SplitCoefficientSet constant(const TreeTopology& tree, const Eigen::VectorXd& value) {
    return SplitCoefficientSet(tree, std::vector<Eigen::VectorXd>(tree.num_internal(), value), value.size());
  }

  static SplitCoefficientSet from_prior(const TreeTopology& tree, const CoefficientPrior& prior, RandomStream& rng) {
    std::vector<Eigen::VectorXd> coefficients;
    coefficients.reserve(tree.num_internal());
    for (std::size_t k = 0; k < tree.num_internal(); ++k) coefficients.push_back(prior.draw(rng));
    return SplitCoefficientSet(tree, std::move(coefficients), prior.dim());
  }

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return coefficients_.size(); }
  const Eigen::VectorXd& operator[](std::size_t node) const { return coefficients_[node]; }
  Eigen::VectorXd& operator[](std::size_t node) { return coefficients_[node]; }

  friend bool operator==(const SplitCoefficientSet& a, const SplitCoefficientSet& b) {
    if (a.dim_ != b.dim_ || a.coefficients_.size() != b.coefficients_.size()) return false;
    for (std::size_t k = 0; k < a.coefficients_.size(); ++k) {
      if (a.coefficients_[k] != b.coefficients_[k]) return false;
    }
    return true;
  }

 private:
  Eigen::Index dim_;
  std::vector<Eigen::VectorXd> coefficients_;
};

/// Linear predictors psi(x)^T gamma for every internal node.
inline std::vector<double> linear_predictors(const SplitCoefficientSet& coeffs, const CovariateFeatures& feats) {
  if (feats.size() != coeffs.dim()) {
    throw InvalidArgument("feature length " + std::to_string(feats.size()) + " does not match coefficient length " +
                          std::to_string(coeffs.dim()));
  }
  std::vector<double> eta(coeffs.size());
  for (std::size_t k = 0; k < coeffs.size(); ++k) eta[k] = feats.dot(coeffs[k]);
  return eta;
}

inline SplitValues split_values(const TreeTopology& tree, const SplitCoefficientSet& coeffs,
                                const CovariateFeatures& feats) {
  if (coeffs.size() != tree.num_internal()) throw InvalidArgument("coefficient set does not match the tree");
  auto v = linear_predictors(coeffs, feats);
  for (auto& x : v) x = logistic(x);
  return v;
}

/// Leaf weights as products of V (left turn) or 1 - V (right turn) along each
/// root-to-leaf path, accumulated in log space.
inline WeightVector weights_from_splits(const TreeTopology& tree, std::span<const double> splits) {
  if (splits.size() != tree.num_internal()) {
    throw InvalidArgument("need one split value per internal node (" + std::to_string(tree.num_internal()) +
                          "), got " + std::to_string(splits.size()));
  }
  for (double v : splits) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("split values must lie in [0, 1]");
  }
  std::vector<double> log_left(splits.size()), log_right(splits.size());
  for (std::size_t j = 0; j < splits.size(); ++j) {
    log_left[j] = std::log(splits[j]);
    log_right[j] = std::log(1.0 - splits[j]);
  }
  WeightVector w(tree.num_leaves());
  for (std::size_t k = 0; k < w.size(); ++k) {
    double log_w = 0.0;
    for (const auto& step : tree.path(k)) log_w += step.digit == 0 ? log_left[step.node] : log_right[step.node];
    w[k] = std::exp(log_w);
  }
  return w;
}

/// Log leaf weights straight from the linear predictors, using
/// log V = -softplus(-eta) and log(1 - V) = -softplus(eta).
inline void log_weights_from_predictors(const TreeTopology& tree, std::span<const double> eta,
                                        std::span<double> out) {
  std::vector<double> log_left(eta.size()), log_right(eta.size());
  for (std::size_t j = 0; j < eta.size(); ++j) {
    log_left[j] = -softplus(-eta[j]);
    log_right[j] = -softplus(eta[j]);
  }
  for (std::size_t k = 0; k < tree.num_leaves(); ++k) {
    double log_w = 0.0;
    for (const auto& step : tree.path(k)) log_w += step.digit == 0 ? log_left[step.node] : log_right[step.node];
    out[k] = log_w;
  }
}

inline WeightVector weights_for_covariate(const TreeTopology& tree, const SplitCoefficientSet& coeffs,
                                          const CovariateFeatures& feats) {
  if (coeffs.size() != tree.num_internal()) throw InvalidArgument("coefficient set does not match the tree");
  const auto eta = linear_predictors(coeffs, feats);
  WeightVector w(tree.num_leaves());
  log_weights_from_predictors(tree, eta, w);
  for (auto& x : w) x = std::exp(x);
  return w;
}

}  // namespace treesb
