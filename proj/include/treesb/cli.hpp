#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treesb/data_io.hpp"
#include "treesb/diagnostics.hpp"
#include "treesb/errors.hpp"
#include "treesb/gibbs_engine.hpp"
#include "treesb/prior_moments.hpp"
#include "treesb/trace_io.hpp"

namespace treesb::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration files
// ---------------------------------------------------------------------------

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

inline std::vector<double> parse_list(const std::string& key, std::string_view text) {
  std::vector<double> out;
  for (auto field : treesb::detail::split(text)) {
    const auto v = treesb::detail::parse_double(field);
    if (!v || !std::isfinite(*v)) throw ConfigError(key + ": malformed number '" + std::string(field) + "'");
    out.push_back(*v);
  }
  return out;
}

inline double parse_number(const std::string& key, std::string_view text) {
  const auto v = parse_list(key, text);
  if (v.size() != 1) throw ConfigError(key + ": expected a single number");
  return v.front();
}

inline std::size_t parse_count(const std::string& key, std::string_view text) {
  const double v = parse_number(key, text);
  if (v < 0 || v != std::floor(v)) throw ConfigError(key + ": expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline Eigen::MatrixXd parse_matrix_file(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw ConfigError("sigma_gamma_file: malformed entry in '" + path.string() + "'");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("sigma_gamma_file: '" + path.string() + "' is empty");
  Eigen::MatrixXd m(rows.size(), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ConfigError("sigma_gamma_file: matrix must be square");
    for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace detail

/// Settings read from a run configuration file. Kernel hyperprior entries
/// that are left out (or set to `data`) resolve against the dataset.
struct FitSettings {
  RunConfig run;
  std::optional<std::vector<double>> m0;
  std::optional<double> kappa0;
  std::optional<double> nu0;
  std::optional<double> psi0_scale;  // psi0 = scale * I; data covariance when unset

  RunConfig resolve(const Dataset& data) const {
    RunConfig cfg = run;
    if (m0 || kappa0 || nu0 || psi0_scale) {
      auto h = KernelHyperprior::data_default(data);
      const auto d = data.response_dim();
      if (m0) {
        if (static_cast<Eigen::Index>(m0->size()) != d) throw ConfigError("m0 must have one entry per response column");
        h.m0 = Eigen::Map<const Eigen::VectorXd>(m0->data(), d);
      }
      if (kappa0) h.kappa0 = *kappa0;
      if (nu0) h.nu0 = *nu0;
      if (psi0_scale) h.psi0 = *psi0_scale * Eigen::MatrixXd::Identity(d, d);
      h.validate();
      cfg.hyperprior = h;
    }
    return cfg;
  }
};

/// Parses `key = value` lines; `#` starts a comment. Relative paths resolve
/// against `base_dir`.
inline FitSettings parse_config(const std::string& text, const fs::path& base_dir = {}) {
  FitSettings s;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_scale = false, have_file = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = treesb::detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(treesb::detail::trim(body.substr(0, eq)));
    const std::string value(treesb::detail::trim(body.substr(eq + 1)));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' appears twice");
    try {
      if (key == "tree") {
        s.run.tree = parse_tree_kind(value);
      } else if (key == "num_leaves") {
        s.run.num_leaves = detail::parse_count(key, value);
      } else if (key == "mu_gamma") {
        s.run.mu_gamma = detail::parse_list(key, value);
      } else if (key == "sigma_gamma_scale") {
        s.run.sigma_gamma_scale = detail::parse_number(key, value);
        have_scale = true;
      } else if (key == "sigma_gamma_file") {
        const fs::path p = fs::path(value).is_absolute() ? fs::path(value) : base_dir / value;
        s.run.sigma_gamma = detail::parse_matrix_file(p);
        have_file = true;
      } else if (key == "m0") {
        if (value != "data") s.m0 = detail::parse_list(key, value);
      } else if (key == "kappa0") {
        s.kappa0 = detail::parse_number(key, value);
      } else if (key == "nu0") {
        s.nu0 = detail::parse_number(key, value);
      } else if (key == "psi0") {
        if (value != "data") s.psi0_scale = detail::parse_number(key, value);
      } else if (key == "zeta") {
        s.run.zeta = detail::parse_number(key, value);
      } else if (key == "burn_in") {
        s.run.burn_in = detail::parse_count(key, value);
      } else if (key == "thin") {
        s.run.thin = detail::parse_count(key, value);
      } else if (key == "n_draws") {
        s.run.n_draws = detail::parse_count(key, value);
      } else if (key == "seed") {
        s.run.seed = detail::parse_count(key, value);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  if (have_scale && have_file) throw ConfigError("give either sigma_gamma_scale or sigma_gamma_file, not both");
  s.run.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void require_directory(const fs::path& dir) {
  if (dir.empty() || !fs::is_directory(dir)) throw ConfigError("output directory '" + dir.string() + "' does not exist");
}

/// Writes `content` to `path` through a temporary file so that a failure
/// never leaves a partial file behind.
inline void write_atomically(const fs::path& path, const std::string& content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ConfigError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::string profile_label(const Eigen::VectorXd& f) {
  std::ostringstream os;
  for (Eigen::Index r = 0; r < f.size(); ++r) os << (r ? ":" : "") << f[r];
  return os.str();
}

struct SimulateOptions {
  std::string design = "benchmark";  // or a component design file path
  double scale = 1.0;
  bool dependent = false;
  std::size_t retain = 20;
  std::uint64_t seed = 1;
  fs::path out;
  bool quiet = false;
};

/// Writes data.csv (y1..yd, f1..fR) and truth.csv (generating component).
inline void cmd_simulate(const SimulateOptions& opt) {
  require_directory(opt.out);
  std::vector<SkewNormalComponent> components;
  if (opt.design != "benchmark") components = load_design(opt.design);
  RandomStream rng = RandomStream(opt.seed).substream("simulate");
  const auto generated = generate_benchmark(opt.scale, opt.dependent, rng, opt.retain, std::move(components));
  std::ostringstream data, truth;
  write_csv(generated.data, data);
  write_labels(*generated.data.reference(), truth);
  write_atomically(opt.out / "data.csv", data.str());
  write_atomically(opt.out / "truth.csv", truth.str());
  if (!opt.quiet) {
    std::cerr << "simulate: wrote " << generated.data.size() << " observations to " << opt.out.string() << '\n';
  }
}

struct FitOptions {
  fs::path config;
  fs::path data;
  fs::path out;
  fs::path manifest;  // rerun from a manifest instead of config + data
  std::optional<std::uint64_t> seed;
  std::size_t chains = 1;
  std::size_t threads = 1;
  bool quiet = false;
};

struct FitResult {
  std::vector<fs::path> traces;
  fs::path manifest;
  std::uint64_t seed = 0;
};

inline std::string trace_file_name(std::size_t chain) { return "trace_chain" + std::to_string(chain) + ".ndjson"; }

/// Runs the sampler and writes one trace per chain plus manifest.json, which
/// records everything needed to reproduce the traces bit for bit.
inline FitResult cmd_fit(const FitOptions& opt) {
  require_directory(opt.out);
  std::string config_text;
  fs::path config_dir;
  fs::path data_path = opt.data;
  std::size_t chains = opt.chains;
  std::optional<std::uint64_t> seed = opt.seed;
  if (!opt.manifest.empty()) {
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(read_file(opt.manifest));
      config_text = m.at("config").get<std::string>();
      config_dir = m.at("config_dir").get<std::string>();
      if (data_path.empty()) data_path = m.at("data").get<std::string>();
      if (!seed) seed = m.at("seed").get<std::uint64_t>();
      chains = m.at("chains").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
  } else {
    if (opt.config.empty()) throw ConfigError("fit needs --config or --manifest");
    try {
      config_text = read_file(opt.config);
    } catch (const NotFound& e) {
      throw ConfigError(e.what());
    }
    config_dir = fs::absolute(opt.config).parent_path();
  }
  if (data_path.empty()) throw ConfigError("fit needs --data");
  if (chains == 0) throw ConfigError("--chains must be at least 1");

  const auto settings = parse_config(config_text, config_dir);
  const auto data = load_csv(data_path);
  auto run = settings.resolve(data);
  if (seed) run.seed = *seed;
  // Validates dimensions before any sampling or output.
  (void)MixtureModel::from_config(data, run);

  FitResult result;
  result.seed = run.seed;
  result.manifest = opt.out / "manifest.json";
  std::vector<std::unique_ptr<std::ofstream>> streams;
  for (std::size_t c = 0; c < chains; ++c) {
    result.traces.push_back(opt.out / trace_file_name(c));
    streams.push_back(std::make_unique<std::ofstream>(result.traces.back(), std::ios::binary));
    if (!*streams.back()) throw ConfigError("cannot write '" + result.traces.back().string() + "'");
  }
  nlohmann::json manifest;
  manifest["config"] = config_text;
  manifest["config_hash"] = hex64(treesb::detail::fnv1a(config_text));
  manifest["config_dir"] = config_dir.string();
  manifest["data"] = fs::absolute(data_path).string();
  manifest["data_hash"] = hex64(treesb::detail::fnv1a(read_file(data_path)));
  manifest["seed"] = run.seed;
  manifest["chains"] = chains;
  std::vector<std::string> trace_names;
  for (std::size_t c = 0; c < chains; ++c) trace_names.push_back(trace_file_name(c));
  manifest["traces"] = trace_names;
  std::vector<std::uint64_t> chain_seeds;
  for (std::size_t c = 0; c < chains; ++c) chain_seeds.push_back(chain_seed(run.seed, c));
  manifest["chain_seeds"] = chain_seeds;
  write_atomically(result.manifest, manifest.dump(2) + "\n");

  run_chains(data, run, chains, opt.threads, [&](std::size_t c) { return stream_sink(*streams[c]); });
  if (!opt.quiet) {
    std::cerr << "fit: " << chains << " chain(s), " << run.n_draws << " draws each, seed " << run.seed << '\n';
  }
  return result;
}

struct MomentsOptions {
  std::vector<std::string> trees{"lopsided", "balanced"};
  std::size_t num_leaves = 64;
  std::vector<double> sigma1_sq{1.0};
  std::vector<double> sigma2_ratio{0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0};
  double p = 0.5;
  std::size_t n_mc = 200000;
  std::size_t streams = 8;
  std::uint64_t seed = 1;
  fs::path out;  // CSV file; stdout when empty
};

struct MomentsRow {
  TreeKind tree;
  std::size_t K;
  double sigma1_sq;
  double sigma2_ratio;
  double corr_closed_form;
  double corr_mc;
  double mc_stderr;
  double lower_bound;
};

/// Cross-covariate correlation sweep with psi(x) = (1, 0), psi(x') = (1, 1),
/// mu_gamma = 0 and Sigma_gamma = diag(sigma1^2, ratio * sigma1^2).
inline std::vector<MomentsRow> moments_sweep(const MomentsOptions& opt) {
  std::vector<MomentsRow> rows;
  const Eigen::Vector2d fx(1.0, 0.0), fxp(1.0, 1.0);
  const RandomStream root(opt.seed);
  std::size_t cell = 0;
  for (const auto& name : opt.trees) {
    const auto kind = parse_tree_kind(name);
    (void)TreeTopology::build(kind, opt.num_leaves);
    for (double s1 : opt.sigma1_sq) {
      for (double ratio : opt.sigma2_ratio) {
        if (!(s1 > 0.0) || !(ratio >= 0.0)) throw ConfigError("variances must be positive");
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        cov(0, 0) = s1;
        cov(1, 1) = std::max(ratio * s1, 1e-300);
        const CoefficientPrior prior(Eigen::Vector2d::Zero(), cov);
        const auto stream = root.substream(cell++);
        const auto split = ev_product_logitnormal(prior, fx, fxp, opt.n_mc, stream.substream("splits"), opt.streams);
        const auto mc = mc_corr_measures(kind, opt.num_leaves, prior, fx, fxp, opt.p, opt.n_mc,
                                         stream.substream("measures"), opt.streams);
        const double bound = kind == TreeKind::Lopsided
                                 ? lower_bound_lt(opt.num_leaves)
                                 : lower_bound_bt(static_cast<std::size_t>(std::countr_zero(opt.num_leaves)));
        rows.push_back({kind, opt.num_leaves, s1, ratio, corr_closed_form(kind, opt.num_leaves, split), mc.value,
                        mc.std_error, bound});
      }
    }
  }
  return rows;
}

inline std::string moments_csv(const std::vector<MomentsRow>& rows) {
  std::ostringstream os;
  os << "tree,K,sigma1_sq,sigma2_ratio,corr_closed_form,corr_mc,mc_stderr,lower_bound\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << to_string(r.tree) << ',' << r.K << ',' << r.sigma1_sq << ',' << r.sigma2_ratio << ',' << r.corr_closed_form
       << ',' << r.corr_mc << ',' << r.mc_stderr << ',' << r.lower_bound << '\n';
  }
  return os.str();
}

inline std::vector<MomentsRow> cmd_moments(const MomentsOptions& opt) {
  if (!opt.out.empty()) require_directory(fs::absolute(opt.out).parent_path());
  auto rows = moments_sweep(opt);
  const auto csv = moments_csv(rows);
  if (opt.out.empty()) {
    std::cout << csv;
  } else {
    write_atomically(opt.out, csv);
  }
  return rows;
}

struct DiagnoseOptions {
  fs::path trace;
  fs::path truth;  // optional
  fs::path out;
  double level = 0.95;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> contrasts;  // empty: one-feature contrasts
  bool quiet = false;
};

struct DiagnoseResult {
  std::vector<double> jaccard;
  std::vector<std::string> warnings;
};

/// Pairs of the trace's profiles that differ in exactly one feature.
inline std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> single_feature_contrasts(
    const std::vector<Eigen::VectorXd>& profiles) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
  for (std::size_t a = 0; a < profiles.size(); ++a) {
    for (std::size_t b = 0; b < profiles.size(); ++b) {
      if (a == b || profiles[a].size() != profiles[b].size()) continue;
      Eigen::Index differing = 0, where = 0;
      for (Eigen::Index r = 0; r < profiles[a].size(); ++r) {
        if (profiles[a][r] != profiles[b][r]) {
          ++differing;
          where = r;
        }
      }
      if (differing == 1 && profiles[a][where] > profiles[b][where]) out.emplace_back(profiles[a], profiles[b]);
    }
  }
  return out;
}

/// Writes jaccard.csv (with --truth), ci_raw.csv, ci_sorted.csv and ci_diff.csv.
inline DiagnoseResult cmd_diagnose(const DiagnoseOptions& opt) {
  require_directory(opt.out);
  const auto trace = read_trace(opt.trace);
  if (trace.draws.size() < 2) throw ValidationError("trace has fewer than two draws");
  DiagnoseResult result;
  if (!trace.complete) result.warnings.push_back("trace is incomplete (no end-of-run marker)");

  std::ostringstream jac;
  if (!opt.truth.empty()) {
    const auto truth = load_labels(opt.truth);
    if (truth.size() != trace.draws.front().allocations.size()) {
      throw ValidationError("truth has " + std::to_string(truth.size()) + " labels but the trace has " +
                            std::to_string(trace.draws.front().allocations.size()) + " observations");
    }
    jac << "draw,jaccard_distance\n" << std::setprecision(10);
    for (const auto& d : trace.draws) {
      result.jaccard.push_back(jaccard_distance(d.allocations, truth));
      jac << d.index << ',' << result.jaccard.back() << '\n';
    }
  }

  std::ostringstream raw, sorted, diff;
  raw << "profile,leaf,lower,median,upper\n" << std::setprecision(10);
  sorted << "profile,rank,lower,median,upper\n" << std::setprecision(10);
  diff << "profile_a,profile_b,leaf,lower,median,upper\n" << std::setprecision(10);
  for (std::size_t p = 0; p < trace.profiles.size(); ++p) {
    std::vector<std::vector<double>> w;
    for (const auto& d : trace.draws) w.push_back(d.weights.at(p));
    const auto ci = pointwise_ci(w, opt.level);
    const auto label = profile_label(trace.profiles[p]);
    for (std::size_t k = 0; k < trace.leaves.size(); ++k) {
      raw << label << ',' << trace.leaves[k].serialize() << ',' << ci.lower[k] << ',' << ci.median[k] << ','
          << ci.upper[k] << '\n';
    }
    const auto s = summarize_sorted_weights(w, opt.level);
    if (s.warning) result.warnings.push_back("profile " + label + ": " + s.message);
    for (std::size_t r = 0; r < s.sorted.median.size(); ++r) {
      sorted << label << ',' << r + 1 << ',' << s.sorted.lower[r] << ',' << s.sorted.median[r] << ','
             << s.sorted.upper[r] << '\n';
    }
  }
  const auto tree = TreeTopology::custom(trace.leaves);
  std::vector<SplitCoefficientSet> coeffs;
  for (const auto& d : trace.draws) coeffs.push_back(d.coeffs);
  const auto contrasts = opt.contrasts.empty() ? single_feature_contrasts(trace.profiles) : opt.contrasts;
  for (const auto& [a, b] : contrasts) {
    const auto ci = pointwise_ci(covariate_effect_differences(tree, coeffs, a, b), opt.level);
    for (std::size_t k = 0; k < trace.leaves.size(); ++k) {
      diff << profile_label(a) << ',' << profile_label(b) << ',' << trace.leaves[k].serialize() << ',' << ci.lower[k]
           << ',' << ci.median[k] << ',' << ci.upper[k] << '\n';
    }
  }
  if (!opt.truth.empty()) write_atomically(opt.out / "jaccard.csv", jac.str());
  write_atomically(opt.out / "ci_raw.csv", raw.str());
  write_atomically(opt.out / "ci_sorted.csv", sorted.str());
  write_atomically(opt.out / "ci_diff.csv", diff.str());
  if (!opt.quiet) {
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  }
  return result;
}

struct CostOptions {
  fs::path trace;
  fs::path out;  // CSV file; stdout when empty
};

struct CostRow {
  std::size_t draw;
  std::size_t n;
  std::size_t occupied;
  std::size_t cost;
  std::optional<double> bt_cost;  // n log2 K
  std::optional<double> lt_min, lt_max, lt_equal;
};

/// Regression-count sums per draw, next to the reference values for the
/// balanced tree and the lopsided extremes at the draw's occupied-leaf count.
inline std::vector<CostRow> cost_table(const PosteriorTrace& trace) {
  const auto tree = TreeTopology::custom(trace.leaves);
  std::vector<CostRow> rows;
  for (const auto& d : trace.draws) {
    std::set<std::size_t> occupied(d.allocations.begin(), d.allocations.end());
    CostRow row{d.index, d.allocations.size(), occupied.size(), gibbs_cost_sum(tree, d.allocations), {}, {}, {}, {}};
    const double n = static_cast<double>(row.n);
    const double kp = static_cast<double>(row.occupied);
    if (trace.tree == TreeKind::Balanced) {
      row.bt_cost = n * std::log2(static_cast<double>(trace.num_leaves));
    } else if (trace.tree == TreeKind::Lopsided) {
      row.lt_min = n + kp * (kp - 1) / 2;
      row.lt_max = kp * (n - kp + 1) + kp * (kp - 1) / 2;
      row.lt_equal = n * (kp + 1) / 2;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<CostRow> cmd_cost(const CostOptions& opt) {
  if (!opt.out.empty()) require_directory(fs::absolute(opt.out).parent_path());
  const auto rows = cost_table(read_trace(opt.trace));
  std::ostringstream os;
  os << "draw,n,occupied_leaves,cost,bt_cost,lt_min,lt_max,lt_equal\n";
  auto opt_str = [](const std::optional<double>& v) { return v ? std::to_string(static_cast<long long>(std::llround(*v))) : std::string(); };
  for (const auto& r : rows) {
    os << r.draw << ',' << r.n << ',' << r.occupied << ',' << r.cost << ',' << opt_str(r.bt_cost) << ','
       << opt_str(r.lt_min) << ',' << opt_str(r.lt_max) << ',' << opt_str(r.lt_equal) << '\n';
  }
  if (opt.out.empty()) {
    std::cout << os.str();
  } else {
    write_atomically(opt.out, os.str());
  }
  return rows;
}

}  // namespace treesb::cli
