#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "treesb/data_io.hpp"
#include "treesb/errors.hpp"
#include "treesb/polya_gamma.hpp"
#include "treesb/random.hpp"
#include "treesb/stick_breaking.hpp"
#include "treesb/tree.hpp"

namespace treesb {

/// Multivariate Gaussian kernel with its Cholesky factor cached.
class GaussianKernel {
 public:
  GaussianKernel(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success) throw NumericalError("kernel covariance is not positive definite");
    lower_ = llt.matrixL();
    lower_inv_ = lower_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
    log_det_ = 2.0 * lower_.diagonal().array().log().sum();
  }

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& y) const {
    const Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>().solve(y - mean_);
    return -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
  }

  /// Log densities of every row of `y`.
  Eigen::VectorXd log_density_rows(const Eigen::MatrixXd& y) const {
    const Eigen::MatrixXd z = (y.rowwise() - mean_.transpose()) * lower_inv_.transpose();
    const double constant = static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det_;
    return (-0.5 * (z.rowwise().squaredNorm().array() + constant)).matrix();
  }

  Eigen::VectorXd draw(RandomStream& rng) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    return mean_ + lower_ * z;
  }

  friend bool operator==(const GaussianKernel& a, const GaussianKernel& b) {
    return a.mean_ == b.mean_ && a.covariance_ == b.covariance_;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd lower_inv_;
  double log_det_ = 0.0;
};

/// Kernel parameters, one Gaussian per leaf in leaf order.
using KernelParams = std::vector<GaussianKernel>;

/// Normal-Inverse-Wishart base measure for the Gaussian kernels.
struct KernelHyperprior {
  Eigen::VectorXd m0;
  double kappa0 = 0.01;
  double nu0 = 0.0;
  Eigen::MatrixXd psi0;

  void validate() const {
    const auto d = m0.size();
    if (d == 0) throw ConfigError("kernel hyperprior: empty location");
    if (!(kappa0 > 0.0)) throw ConfigError("kernel hyperprior: kappa0 must be positive");
    if (!(nu0 > static_cast<double>(d) - 1.0)) {
      throw ConfigError("kernel hyperprior: nu0 must exceed d - 1 = " + std::to_string(d - 1));
    }
    if (psi0.rows() != d || psi0.cols() != d) throw ConfigError("kernel hyperprior: psi0 has the wrong shape");
    Eigen::LLT<Eigen::MatrixXd> llt(psi0);
    if (llt.info() != Eigen::Success) throw ConfigError("kernel hyperprior: psi0 is not positive definite");
  }

  /// m0 = data mean, kappa0 = 0.01, nu0 = d + 2, psi0 = data covariance.
  static KernelHyperprior data_default(const Dataset& data) {
    const auto d = data.response_dim();
    KernelHyperprior h;
    h.kappa0 = 0.01;
    h.nu0 = static_cast<double>(d) + 2.0;
    if (data.size() < 2) {
      h.m0 = Eigen::VectorXd::Zero(d);
      h.psi0 = Eigen::MatrixXd::Identity(d, d);
      return h;
    }
    h.m0 = data.y().colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.y().rowwise() - h.m0.transpose();
    h.psi0 = centered.transpose() * centered / static_cast<double>(data.size() - 1);
    if (Eigen::LLT<Eigen::MatrixXd>(h.psi0).info() != Eigen::Success) {
      h.psi0 += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    }
    return h;
  }
};

/// Draw from the inverse-Wishart IW(dof, scale) by the Bartlett decomposition
/// of its Wishart inverse.
inline Eigen::MatrixXd sample_inverse_wishart(double dof, const Eigen::MatrixXd& scale, RandomStream& rng) {
  const auto d = scale.rows();
  const Eigen::MatrixXd scale_inv = Eigen::LLT<Eigen::MatrixXd>(scale).solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (scale_inv + scale_inv.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalError("inverse-Wishart scale is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = lower * a;
  const Eigen::MatrixXd wishart = la * la.transpose();
  Eigen::MatrixXd out = Eigen::LLT<Eigen::MatrixXd>(wishart).solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (out + out.transpose());
}

/// Normal-Inverse-Wishart parameters after conditioning on a group of points.
struct NiwPosterior {
  Eigen::VectorXd mean;
  double kappa;
  double nu;
  Eigen::MatrixXd psi;
};

/// Conjugate update where each point carries weight `zeta`.
inline NiwPosterior niw_posterior(const KernelHyperprior& h, const Eigen::MatrixXd& y,
                                  const std::vector<std::size_t>& members, double zeta) {
  const auto d = h.m0.size();
  if (members.empty()) return {h.m0, h.kappa0, h.nu0, h.psi0};
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (auto i : members) mean += y.row(i).transpose();
  mean /= static_cast<double>(members.size());
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (auto i : members) {
    const Eigen::VectorXd c = y.row(i).transpose() - mean;
    scatter.noalias() += c * c.transpose();
  }
  const double n_eff = zeta * static_cast<double>(members.size());
  NiwPosterior post;
  post.kappa = h.kappa0 + n_eff;
  post.nu = h.nu0 + n_eff;
  post.mean = (h.kappa0 * h.m0 + n_eff * mean) / post.kappa;
  const Eigen::VectorXd shift = mean - h.m0;
  post.psi = h.psi0 + zeta * scatter + (h.kappa0 * n_eff / post.kappa) * shift * shift.transpose();
  post.psi = 0.5 * (post.psi + post.psi.transpose());
  return post;
}

inline GaussianKernel sample_niw(const NiwPosterior& post, RandomStream& rng) {
  const auto d = post.mean.size();
  if (!(post.nu > static_cast<double>(d) - 1.0)) {
    throw ConfigError("kernel posterior degrees of freedom " + std::to_string(post.nu) +
                      " do not exceed d - 1; the hyperprior is too weak for d = " + std::to_string(d));
  }
  Eigen::MatrixXd cov = sample_inverse_wishart(post.nu, post.psi, rng);
  GaussianKernel shape(Eigen::VectorXd::Zero(d), cov / post.kappa);
  Eigen::VectorXd mean = post.mean + shape.draw(rng);
  return GaussianKernel(std::move(mean), std::move(cov));
}

/// One state of the chain. `members[node]` lists the observations whose leaf
/// descends from internal node `node`, and `pg_aux[node]` holds their
/// auxiliary Polya-Gamma draws from the node's last coefficient update.
struct MixtureState {
  std::vector<std::size_t> allocations;
  KernelParams kernels;
  SplitCoefficientSet coeffs;
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::vector<double>> pg_aux;
};

/// Model settings for one chain. The coefficient prior is given as a mean
/// (scalar broadcast or full vector) and either a scalar multiple of the
/// identity or a full covariance matrix; both are resolved against the data's
/// feature dimension.
struct RunConfig {
  TreeKind tree = TreeKind::Balanced;
  std::size_t num_leaves = 16;
  std::vector<double> mu_gamma{0.0};
  double sigma_gamma_scale = 10.0;
  std::optional<Eigen::MatrixXd> sigma_gamma;
  std::optional<KernelHyperprior> hyperprior;
  double zeta = 1.0;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::size_t n_draws = 1000;
  std::uint64_t seed = 1;

  void validate() const {
    if (tree == TreeKind::Custom) throw ConfigError("the sampler accepts lopsided or balanced trees only");
    try {
      (void)TreeTopology::build(tree, num_leaves);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("num_leaves: ") + e.what());
    }
    if (!(zeta > 0.0 && zeta <= 1.0)) throw ConfigError("zeta must lie in (0, 1]");
    if (thin < 1) throw ConfigError("thin must be at least 1");
    if (n_draws < 1) throw ConfigError("n_draws must be at least 1");
    if (!(sigma_gamma_scale > 0.0) && !sigma_gamma) throw ConfigError("sigma_gamma_scale must be positive");
    if (mu_gamma.empty()) throw ConfigError("mu_gamma must not be empty");
  }

  CoefficientPrior coefficient_prior(Eigen::Index dim) const {
    Eigen::VectorXd mean(dim);
    if (mu_gamma.size() == 1) {
      mean.setConstant(mu_gamma.front());
    } else if (static_cast<Eigen::Index>(mu_gamma.size()) == dim) {
      for (Eigen::Index r = 0; r < dim; ++r) mean[r] = mu_gamma[r];
    } else {
      throw ConfigError("mu_gamma has " + std::to_string(mu_gamma.size()) + " entries but the data have " +
                        std::to_string(dim) + " feature columns");
    }
    const Eigen::MatrixXd cov = sigma_gamma ? *sigma_gamma : sigma_gamma_scale * Eigen::MatrixXd::Identity(dim, dim);
    try {
      return CoefficientPrior(std::move(mean), cov);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
};

/// Posterior simulation for the finite tree stick-breaking mixture with
/// Gaussian kernels. Holds the fixed parts of the model; states are values.
class MixtureModel {
 public:
  MixtureModel(TreeTopology tree, const Dataset& data, CoefficientPrior prior, KernelHyperprior hyperprior,
               double zeta = 1.0)
      : tree_(std::move(tree)),
        data_(&data),
        prior_(std::move(prior)),
        hyperprior_(std::move(hyperprior)),
        zeta_(zeta) {
    if (prior_.dim() != data.feature_dim()) {
      throw ConfigError("coefficient prior dimension does not match the number of feature columns");
    }
    if (hyperprior_.m0.size() != data.response_dim()) {
      throw ConfigError("kernel hyperprior dimension does not match the number of response columns");
    }
    hyperprior_.validate();
    if (!(zeta_ > 0.0 && zeta_ <= 1.0)) throw ConfigError("zeta must lie in (0, 1]");
    goes_left_.assign(tree_.num_internal(), std::vector<bool>(tree_.num_leaves(), false));
    for (std::size_t k = 0; k < tree_.num_leaves(); ++k) {
      for (const auto& step : tree_.path(k)) goes_left_[step.node][k] = step.digit == 0;
    }
  }

  static MixtureModel from_config(const Dataset& data, const RunConfig& config) {
    config.validate();
    return MixtureModel(TreeTopology::build(config.tree, config.num_leaves), data,
                        config.coefficient_prior(data.feature_dim()),
                        config.hyperprior ? *config.hyperprior : KernelHyperprior::data_default(data), config.zeta);
  }

  const TreeTopology& tree() const noexcept { return tree_; }
  const Dataset& data() const noexcept { return *data_; }
  const CoefficientPrior& prior() const noexcept { return prior_; }
  const KernelHyperprior& hyperprior() const noexcept { return hyperprior_; }
  double zeta() const noexcept { return zeta_; }
  void set_zeta(double zeta) {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw ConfigError("zeta must lie in (0, 1]");
    zeta_ = zeta;
  }

  /// Starting state: coefficients at the prior mean, kernel means seeded on
  /// spread-out observations (k-means++ style) with a shrunken data
  /// covariance, and allocations from one allocation step.
  MixtureState initial_state(RandomStream& rng) const {
    const auto K = tree_.num_leaves();
    const auto n = data_->size();
    MixtureState s{std::vector<std::size_t>(n, 0), {}, SplitCoefficientSet::constant(tree_, prior_.mean()),
                   std::vector<std::vector<std::size_t>>(tree_.num_internal()),
                   std::vector<std::vector<double>>(tree_.num_internal())};
    if (n == 0) {
      for (std::size_t k = 0; k < K; ++k) s.kernels.push_back(sample_niw(niw_posterior(hyperprior_, data_->y(), {}, zeta_), rng));
      rebuild_members(s);
      return s;
    }
    const auto d = data_->response_dim();
    const Eigen::MatrixXd spread = hyperprior_.psi0 / std::max(1.0, static_cast<double>(K));
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::size_t pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n;
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::VectorXd center = data_->y().row(pick).transpose();
      s.kernels.emplace_back(center, spread + 1e-9 * Eigen::MatrixXd::Identity(d, d));
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dist[i] = std::min(dist[i], (data_->y().row(i).transpose() - center).squaredNorm());
        total += dist[i];
      }
      if (total <= 0.0) continue;
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= dist[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    allocate_observations(s, rng);
    return s;
  }

  /// Log weights of every leaf for every covariate profile.
  std::vector<std::vector<double>> profile_log_weights(const SplitCoefficientSet& coeffs) const {
    std::vector<std::vector<double>> out(data_->num_profiles(), std::vector<double>(tree_.num_leaves()));
    for (std::size_t p = 0; p < data_->num_profiles(); ++p) {
      const auto eta = linear_predictors(coeffs, data_->profiles()[p]);
      log_weights_from_predictors(tree_, eta, out[p]);
    }
    return out;
  }

  /// Normalized log allocation probabilities of observation i.
  std::vector<double> allocation_log_probabilities(const MixtureState& s, std::size_t i) const {
    const auto eta = linear_predictors(s.coeffs, data_->profiles()[data_->profile_of(i)]);
    std::vector<double> lp(tree_.num_leaves());
    log_weights_from_predictors(tree_, eta, lp);
    for (std::size_t k = 0; k < lp.size(); ++k) lp[k] += zeta_ * s.kernels[k].log_density(data_->y().row(i).transpose());
    const double mx = *std::max_element(lp.begin(), lp.end());
    double total = 0.0;
    for (double v : lp) total += std::exp(v - mx);
    const double log_norm = mx + std::log(total);
    for (auto& v : lp) v -= log_norm;
    return lp;
  }

  /// Draws every allocation from mass proportional to W_{x_i,k} h(y_i; theta_k)^zeta
  /// by the Gumbel-max trick.
  void allocate_observations(MixtureState& s, RandomStream& rng) const {
    const auto K = tree_.num_leaves();
    const auto n = data_->size();
    const auto log_w = profile_log_weights(s.coeffs);
    Eigen::MatrixXd log_lik(n, K);
    for (std::size_t k = 0; k < K; ++k) log_lik.col(k) = s.kernels[k].log_density_rows(data_->y());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& lw = log_w[data_->profile_of(i)];
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_k = K;
      bool any_finite = false;
      for (std::size_t k = 0; k < K; ++k) {
        const double mass = lw[k] + zeta_ * log_lik(i, k);
        if (std::isnan(mass)) throw NumericalError("allocation mass is NaN for observation " + std::to_string(i));
        if (mass == -std::numeric_limits<double>::infinity()) continue;
        any_finite = true;
        const double score = mass + rng.gumbel();
        if (score > best) {
          best = score;
          best_k = k;
        }
      }
      if (!any_finite) throw NumericalError("all allocation masses underflow for observation " + std::to_string(i));
      s.allocations[i] = best_k;
    }
    rebuild_members(s);
  }

  /// Coefficient update at one internal node by Polya-Gamma augmentation:
  /// omega_i ~ PG(1, psi_i' gamma) for i in S_node, then gamma ~ N(mu*, Sigma*).
  void update_gamma_node(std::size_t node, MixtureState& s, RandomStream& rng) const {
    const auto& members = s.members.at(node);
    const auto& node_id = tree_.internal_node(node);
    const auto R = prior_.dim();
    const auto m = static_cast<Eigen::Index>(members.size());
    auto& omega = s.pg_aux[node];
    omega.resize(members.size());
    Eigen::MatrixXd x(m, R);
    Eigen::VectorXd kappa(m);
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto i = members[t];
      x.row(t) = data_->features().row(i);
      kappa[t] = goes_left_[node][s.allocations[i]] ? 0.5 : -0.5;
    }
    const Eigen::VectorXd eta = x * s.coeffs[node];
    Eigen::VectorXd w(m);
    for (Eigen::Index t = 0; t < m; ++t) w[t] = omega[t] = sample_pg(PGParams(1, eta[t]), rng);
    Eigen::MatrixXd precision = prior_.precision();
    precision.noalias() += x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd rhs = x.transpose() * kappa + prior_.precision_mean();
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("coefficient update at node '" + node_id.serialize() +
                           "': precision is not positive definite");
    }
    Eigen::VectorXd z(R);
    for (Eigen::Index r = 0; r < R; ++r) z[r] = rng.normal();
    // precision = L L^T, so L^{-T} z has covariance precision^{-1}.
    s.coeffs[node] = llt.solve(rhs) + llt.matrixU().solve(z);
  }

  void update_atoms(MixtureState& s, RandomStream& rng) const {
    const auto K = tree_.num_leaves();
    std::vector<std::vector<std::size_t>> groups(K);
    for (std::size_t i = 0; i < s.allocations.size(); ++i) groups[s.allocations[i]].push_back(i);
    s.kernels.clear();
    for (std::size_t k = 0; k < K; ++k) {
      s.kernels.push_back(sample_niw(niw_posterior(hyperprior_, data_->y(), groups[k], zeta_), rng));
    }
  }

  /// Allocation step, coefficient update at every internal node, then atoms.
  void gibbs_sweep(MixtureState& s, RandomStream& rng) const {
    allocate_observations(s, rng);
    for (std::size_t node = 0; node < tree_.num_internal(); ++node) update_gamma_node(node, s, rng);
    update_atoms(s, rng);
  }

  void rebuild_members(MixtureState& s) const {
    s.members.assign(tree_.num_internal(), {});
    for (std::size_t i = 0; i < s.allocations.size(); ++i) {
      for (const auto& step : tree_.path(s.allocations[i])) s.members[step.node].push_back(i);
    }
  }

  /// Leaf weights at each covariate profile of the dataset.
  std::vector<WeightVector> profile_weights(const SplitCoefficientSet& coeffs) const {
    std::vector<WeightVector> out;
    for (const auto& f : data_->profiles()) out.push_back(weights_for_covariate(tree_, coeffs, f));
    return out;
  }

 private:
  TreeTopology tree_;
  const Dataset* data_;
  CoefficientPrior prior_;
  KernelHyperprior hyperprior_;
  double zeta_;
  std::vector<std::vector<bool>> goes_left_;  // [node][leaf]: leaf is a left descendant
};

/// Sum over observations of the number of ancestors of their leaves: the
/// number of logistic regressions each observation enters in one sweep.
inline std::size_t gibbs_cost_sum(const TreeTopology& tree, std::span<const std::size_t> allocations) {
  std::size_t total = 0;
  for (auto leaf : allocations) total += tree.path(leaf).size();
  return total;
}

struct TraceDraw {
  std::size_t index = 0;
  SplitCoefficientSet coeffs;
  KernelParams kernels;
  std::vector<std::size_t> allocations;
  std::vector<WeightVector> weights;  // per profile
};

struct PosteriorTrace {
  TreeKind tree = TreeKind::Balanced;
  std::size_t num_leaves = 0;
  std::vector<NodeId> leaves;
  std::vector<NodeId> internal_nodes;
  std::vector<Eigen::VectorXd> profiles;
  std::vector<TraceDraw> draws;
  bool complete = false;
};

/// Receives the trace incrementally: once before the first draw, once per
/// draw, and once at the end with the completeness flag.
struct TraceSink {
  std::function<void(const PosteriorTrace&)> begin;
  std::function<void(const PosteriorTrace&, const TraceDraw&)> draw;
  std::function<void(const PosteriorTrace&)> end;
};

/// Runs one chain: burn_in sweeps discarded, then n_draws snapshots taken
/// every `thin` sweeps. Everything is determined by config.seed. If
/// `should_stop` returns true the chain ends early and the trace is marked
/// incomplete.
inline PosteriorTrace run_chain(const Dataset& data, const RunConfig& config, const TraceSink& sink = {},
                                const std::function<bool()>& should_stop = {}) {
  const auto model = MixtureModel::from_config(data, config);
  RandomStream root(config.seed);
  auto init_rng = root.substream("init");
  auto sweep_rng = root.substream("sweep");
  PosteriorTrace trace;
  trace.tree = config.tree;
  trace.num_leaves = config.num_leaves;
  trace.leaves = model.tree().leaves();
  trace.internal_nodes = model.tree().internal_nodes();
  trace.profiles = data.profiles();
  if (sink.begin) sink.begin(trace);

  auto finish = [&](bool complete) {
    trace.complete = complete;
    if (sink.end) sink.end(trace);
    return trace;
  };

  auto state = model.initial_state(init_rng);
  for (std::size_t it = 0; it < config.burn_in; ++it) {
    if (should_stop && should_stop()) return finish(false);
    model.gibbs_sweep(state, sweep_rng);
  }
  for (std::size_t d = 0; d < config.n_draws; ++d) {
    for (std::size_t t = 0; t < config.thin; ++t) {
      if (should_stop && should_stop()) return finish(false);
      model.gibbs_sweep(state, sweep_rng);
    }
    TraceDraw draw{d, state.coeffs, state.kernels, state.allocations, model.profile_weights(state.coeffs)};
    if (sink.draw) sink.draw(trace, draw);
    trace.draws.push_back(std::move(draw));
  }
  return finish(true);
}

/// Seed of chain `chain` derived from a master seed.
inline std::uint64_t chain_seed(std::uint64_t master, std::size_t chain) {
  return RandomStream(master).substream("chain").substream(chain).seed();
}

/// Runs independent chains on up to `threads` worker threads. Chain c uses
/// chain_seed(config.seed, c), so results do not depend on the thread count.
inline std::vector<PosteriorTrace> run_chains(const Dataset& data, const RunConfig& config, std::size_t chains,
                                              std::size_t threads,
                                              const std::function<TraceSink(std::size_t)>& sink_for = {}) {
  if (chains == 0) throw ConfigError("need at least one chain");
  config.validate();
  std::vector<PosteriorTrace> out(chains);
  std::vector<std::exception_ptr> errors(chains);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chains; c = next++) {
      try {
        auto cfg = config;
        cfg.seed = chain_seed(config.seed, c);
        out[c] = run_chain(data, cfg, sink_for ? sink_for(c) : TraceSink{});
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, chains);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace treesb
