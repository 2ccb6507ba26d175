#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "treesb/errors.hpp"
#include "treesb/random.hpp"

namespace treesb {

/// Observations y (n x d), covariate features psi(x) (n x R) and an optional
/// reference clustering. Rows sharing identical features form a covariate
/// profile; profiles are numbered in order of first appearance.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd y, Eigen::MatrixXd features, std::optional<std::vector<int>> reference = std::nullopt)
      : y_(std::move(y)), features_(std::move(features)), reference_(std::move(reference)) {
    if (y_.rows() != features_.rows()) {
      throw ValidationError("response and feature matrices have different row counts");
    }
    if (y_.cols() == 0) throw ValidationError("dataset needs at least one response column");
    if (features_.cols() == 0) throw ValidationError("dataset needs at least one feature column");
    if (!y_.allFinite() || !features_.allFinite()) throw ValidationError("dataset contains non-finite values");
    if (reference_ && reference_->size() != static_cast<std::size_t>(y_.rows())) {
      throw ValidationError("reference clustering length does not match the number of observations");
    }
    index_profiles();
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(y_.rows()); }
  Eigen::Index response_dim() const noexcept { return y_.cols(); }
  Eigen::Index feature_dim() const noexcept { return features_.cols(); }
  const Eigen::MatrixXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& features() const noexcept { return features_; }
  const std::optional<std::vector<int>>& reference() const noexcept { return reference_; }

  std::size_t num_profiles() const noexcept { return profiles_.size(); }
  const std::vector<Eigen::VectorXd>& profiles() const noexcept { return profiles_; }
  std::size_t profile_of(std::size_t i) const { return profile_of_[i]; }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.y_.rows() == b.y_.rows() && a.y_.cols() == b.y_.cols() && a.features_.cols() == b.features_.cols() &&
           a.y_ == b.y_ && a.features_ == b.features_ && a.reference_ == b.reference_;
  }

 private:
  void index_profiles() {
    std::map<std::vector<double>, std::size_t> seen;
    profile_of_.resize(size());
    for (Eigen::Index i = 0; i < features_.rows(); ++i) {
      std::vector<double> key(features_.cols());
      for (Eigen::Index r = 0; r < features_.cols(); ++r) key[r] = features_(i, r);
      auto [it, inserted] = seen.emplace(std::move(key), profiles_.size());
      if (inserted) profiles_.push_back(features_.row(i).transpose());
      profile_of_[i] = it->second;
    }
  }

  Eigen::MatrixXd y_;
  Eigen::MatrixXd features_;
  std::optional<std::vector<int>> reference_;
  std::vector<Eigen::VectorXd> profiles_;
  std::vector<std::size_t> profile_of_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Parses a real number; returns nullopt on malformed text. "nan"/"inf" parse
/// successfully so that callers can report them as non-finite.
inline std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

inline bool matches_column(std::string_view name, char prefix, std::size_t index) {
  return name.size() > 1 && name.front() == prefix && name.substr(1) == std::to_string(index);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Reads a dataset whose header is y1..yd followed by f1..fR.
inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open data file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw ValidationError("data file '" + path.string() + "' is empty");
  }
  const auto header = detail::split(line);
  std::size_t d = 0;
  while (d < header.size() && detail::matches_column(header[d], 'y', d + 1)) ++d;
  std::size_t r = 0;
  while (d + r < header.size() && detail::matches_column(header[d + r], 'f', r + 1)) ++r;
  if (d == 0 || r == 0 || d + r != header.size()) {
    throw ParseError("header must be y1..yd followed by f1..fR", 1);
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != d + r) {
      throw ParseError("expected " + std::to_string(d + r) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> row(d + r);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = detail::parse_double(fields[c]);
      if (!v) throw ParseError("malformed number '" + std::string(fields[c]) + "'", line_no);
      if (!std::isfinite(*v)) {
        throw ValidationError("line " + std::to_string(line_no) + ": non-finite value in column " +
                              std::string(header[c]));
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("data file '" + path.string() + "' has no rows");
  Eigen::MatrixXd y(rows.size(), d);
  Eigen::MatrixXd f(rows.size(), r);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) y(i, c) = rows[i][c];
    for (std::size_t c = 0; c < r; ++c) f(i, c) = rows[i][d + c];
  }
  return Dataset(std::move(y), std::move(f));
}

/// Reads a one-column clustering file (header `label`).
inline std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open label file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("label file '" + path.string() + "' is empty");
  if (detail::trim(line) != "label") throw ParseError("label file header must be 'label'", 1);
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ParseError("malformed label '" + std::string(text) + "'", line_no);
    }
    labels.push_back(value);
  }
  return labels;
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  for (Eigen::Index c = 0; c < data.response_dim(); ++c) out << (c ? "," : "") << 'y' << c + 1;
  for (Eigen::Index c = 0; c < data.feature_dim(); ++c) out << ",f" << c + 1;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index c = 0; c < data.response_dim(); ++c) {
      out << (c ? "," : "") << detail::format_double(data.y()(i, c));
    }
    for (Eigen::Index c = 0; c < data.feature_dim(); ++c) out << ',' << detail::format_double(data.features()(i, c));
    out << '\n';
  }
}

inline void write_labels(const std::vector<int>& labels, std::ostream& out) {
  out << "label\n";
  for (int l : labels) out << l << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Skew-normal component: location, lower-triangular scale factor and
/// per-coordinate skewness.
struct SkewNormalComponent {
  Eigen::VectorXd location;
  Eigen::MatrixXd scale_chol;
  Eigen::VectorXd skew;

  void validate() const {
    const auto d = location.size();
    if (d == 0 || scale_chol.rows() != d || scale_chol.cols() != d || skew.size() != d) {
      throw InvalidArgument("skew-normal component dimensions are inconsistent");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(scale_chol(j, j) > 0.0)) throw InvalidArgument("skew-normal scale factor must have positive diagonal");
      for (Eigen::Index k = j + 1; k < d; ++k) {
        if (scale_chol(j, k) != 0.0) throw InvalidArgument("skew-normal scale factor must be lower triangular");
      }
    }
  }
};

/// Hidden-truncation draw: each coordinate is delta |z0| + sqrt(1 - delta^2) z1
/// with delta = skew / sqrt(1 + skew^2), then mapped through the scale factor.
inline Eigen::VectorXd sample_skew_normal(const SkewNormalComponent& c, RandomStream& rng) {
  const auto d = c.location.size();
  Eigen::VectorXd u(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double delta = c.skew[j] / std::sqrt(1.0 + c.skew[j] * c.skew[j]);
    const double z0 = std::abs(rng.normal());
    const double z1 = rng.normal();
    u[j] = delta * z0 + std::sqrt(1.0 - delta * delta) * z1;
  }
  return c.location + c.scale_chol.triangularView<Eigen::Lower>() * u;
}

/// Reads a component file: header loc1..locd, chol entries row by row over the
/// lower triangle (chol11, chol21, chol22, ...), then skew1..skewd.
inline std::vector<SkewNormalComponent> load_design(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open design file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("design file is empty");
  const auto header = detail::split(line);
  std::size_t d = 0;
  while (d < header.size() && header[d] == "loc" + std::to_string(d + 1)) ++d;
  if (d == 0 || header.size() != 2 * d + d * (d + 1) / 2) throw ParseError("unrecognized design header", 1);
  std::vector<SkewNormalComponent> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
    const auto fields = detail::split(line);
    if (fields.size() != header.size()) throw ParseError("wrong number of fields", line_no);
    std::vector<double> v;
    for (auto f : fields) {
      const auto x = detail::parse_double(f);
      if (!x || !std::isfinite(*x)) throw ParseError("malformed number '" + std::string(f) + "'", line_no);
      v.push_back(*x);
    }
    const auto dim = static_cast<Eigen::Index>(d);
    SkewNormalComponent c{Eigen::VectorXd(dim), Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd(dim)};
    std::size_t pos = 0;
    for (Eigen::Index j = 0; j < dim; ++j) c.location[j] = v[pos++];
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index k = 0; k <= j; ++k) c.scale_chol(j, k) = v[pos++];
    for (Eigen::Index j = 0; j < dim; ++j) c.skew[j] = v[pos++];
    c.validate();
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ValidationError("design file has no components");
  return out;
}

/// Twenty well-separated 2-D components on a 5 x 4 grid with spacing 10; the
/// scale factors have diagonals between 1.0 and 1.5 and the skews are mild.
inline std::vector<SkewNormalComponent> default_benchmark_components() {
  std::vector<SkewNormalComponent> out;
  for (int j = 0; j < 20; ++j) {
    const int col = j % 5;
    const int row = j / 5;
    SkewNormalComponent c{Eigen::Vector2d(10.0 * col, 10.0 * row), Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero()};
    c.scale_chol(0, 0) = 1.0 + 0.1 * (j % 6);
    c.scale_chol(1, 0) = 0.3 * ((j % 3) - 1);
    c.scale_chol(1, 1) = 1.0 + 0.1 * ((j + 3) % 6);
    c.skew = Eigen::Vector2d(1.5 * ((j % 5) - 2) / 2.0, 1.5 * (((j + 2) % 5) - 2) / 2.0);
    out.push_back(std::move(c));
  }
  return out;
}

/// Finite mixture design over a finite covariate space: per-cluster totals,
/// the covariate profiles, and per-profile cluster counts.
struct SyntheticDesign {
  std::vector<SkewNormalComponent> components;
  std::vector<Eigen::VectorXd> profiles;
  std::vector<std::vector<long>> counts;  // counts[profile][cluster]

  std::vector<long> cluster_totals() const {
    std::vector<long> totals(components.size(), 0);
    for (const auto& row : counts)
      for (std::size_t j = 0; j < row.size(); ++j) totals[j] += row[j];
    return totals;
  }
  long total() const {
    long n = 0;
    for (const auto& row : counts)
      for (long c : row) n += c;
    return n;
  }
};

struct GeneratedData {
  Dataset data;
  SyntheticDesign design;
};

/// Builds the 20-cluster design on covariates {1} x {0,1}^3.
///
/// Cluster totals are 8 * (200, 170, ..., 6) times `scale`; each must be an
/// integer. Totals are spread over the eight profiles as evenly as possible,
/// handing remainders out cyclically so profile sizes stay balanced. The
/// dependent variant adds +-20*scale shifts between cluster pairs (8,5),
/// (10,6) and (9,7) driven by x1, x2, x3; 80*scale must be an integer. With
/// `retain` < 20 the clusters beyond the first `retain` are merged into the last retained one.
inline SyntheticDesign benchmark_design(double scale, bool dependent, std::size_t retain = 20,
                                       std::vector<SkewNormalComponent> components = {}) {
  static constexpr int base[20] = {200, 170, 130, 100, 80, 70, 50, 30, 28, 22, 20, 18, 16, 14, 12, 10, 9, 8, 7, 6};
  if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
  if (retain == 0 || retain > 20) throw InvalidArgument("retain must be between 1 and 20");
  if (components.empty()) components = default_benchmark_components();
  if (components.size() != 20) throw InvalidArgument("the benchmark design needs 20 components");

  auto integral = [](double v, const std::string& what) {
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9 || r < 0) {
      throw InvalidArgument(what + " is not a non-negative integer at this scale (" + detail::format_double(v) + ")");
    }
    return static_cast<long>(r);
  };

  SyntheticDesign design;
  for (int p = 0; p < 8; ++p) {
    design.profiles.push_back(Eigen::Vector4d(1.0, (p >> 2) & 1, (p >> 1) & 1, p & 1));
  }
  design.counts.assign(8, std::vector<long>(20, 0));
  std::size_t offset = 0;
  for (int j = 0; j < 20; ++j) {
    const long total = integral(8.0 * base[j] * scale, "count of cluster " + std::to_string(j + 1));
    for (std::size_t p = 0; p < 8; ++p) design.counts[p][j] = total / 8;
    const long extra = total % 8;
    for (long t = 0; t < extra; ++t) design.counts[(offset + t) % 8][j] += 1;
    offset = (offset + extra) % 8;
  }
  if (dependent) {
    // Each side of a covariate (four profiles) moves 4 * 20 * scale points in
    // total. When 20 * scale is fractional the per-profile shifts are its
    // floor or ceiling, with the ceilings going to the profiles where the
    // losing cluster is largest, so the side totals stay exact.
    const long side_total = integral(80.0 * scale, "covariate perturbation");
    const long floor_shift = side_total / 4;
    const long extra = side_total % 4;
    // (cluster gaining when the covariate is 1, cluster losing), zero-based.
    const std::pair<int, int> pairs[3] = {{7, 4}, {9, 5}, {8, 6}};
    for (int c = 0; c < 3; ++c) {
      for (int side = 0; side < 2; ++side) {
        const int loser = side == 1 ? pairs[c].second : pairs[c].first;
        std::vector<std::size_t> members;
        for (std::size_t p = 0; p < 8; ++p) {
          if ((design.profiles[p][c + 1] > 0.5) == (side == 1)) members.push_back(p);
        }
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
          return design.counts[a][loser] > design.counts[b][loser];
        });
        const long sign = side == 1 ? 1 : -1;
        for (std::size_t t = 0; t < members.size(); ++t) {
          const long shift = floor_shift + (static_cast<long>(t) < extra ? 1 : 0);
          design.counts[members[t]][pairs[c].first] += sign * shift;
          design.counts[members[t]][pairs[c].second] -= sign * shift;
        }
      }
    }
  }
  for (std::size_t p = 0; p < 8; ++p) {
    for (int j = 0; j < 20; ++j) {
      if (design.counts[p][j] < 0) {
        throw InvalidArgument("cluster " + std::to_string(j + 1) + " has a negative count at this scale");
      }
    }
  }
  if (retain < 20) {
    for (auto& row : design.counts) {
      for (std::size_t j = retain; j < 20; ++j) row[retain - 1] += row[j];
      row.resize(retain);
    }
  }
  components.resize(retain);
  design.components = std::move(components);
  return design;
}

/// Draws every observation of a design. Rows are grouped by profile and then
/// by cluster; the reference clustering holds 1-based cluster numbers.
inline GeneratedData generate(const SyntheticDesign& design, RandomStream& rng) {
  if (design.components.empty() || design.profiles.empty()) throw InvalidArgument("design is empty");
  for (const auto& c : design.components) c.validate();
  const auto d = design.components.front().location.size();
  const auto r = design.profiles.front().size();
  const long n = design.total();
  Eigen::MatrixXd y(n, d);
  Eigen::MatrixXd f(n, r);
  std::vector<int> labels;
  labels.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < design.profiles.size(); ++p) {
    for (std::size_t j = 0; j < design.components.size(); ++j) {
      if (design.counts[p][j] < 0) throw InvalidArgument("cluster " + std::to_string(j + 1) + " has a negative count");
      for (long t = 0; t < design.counts[p][j]; ++t) {
        y.row(row) = sample_skew_normal(design.components[j], rng).transpose();
        f.row(row) = design.profiles[p].transpose();
        labels.push_back(static_cast<int>(j + 1));
        ++row;
      }
    }
  }
  return {Dataset(std::move(y), std::move(f), std::move(labels)), design};
}

inline GeneratedData generate_benchmark(double scale, bool dependent, RandomStream& rng, std::size_t retain = 20,
                                       std::vector<SkewNormalComponent> components = {}) {
  return generate(benchmark_design(scale, dependent, retain, std::move(components)), rng);
}

/// True mixture weights per profile implied by a design.
inline std::vector<std::vector<double>> design_weights(const SyntheticDesign& design) {
  std::vector<std::vector<double>> out;
  for (const auto& row : design.counts) {
    double total = 0.0;
    for (long c : row) total += static_cast<double>(c);
    std::vector<double> w;
    for (long c : row) w.push_back(total > 0 ? static_cast<double>(c) / total : 0.0);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace treesb
