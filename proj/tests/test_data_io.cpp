#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "treesb/data_io.hpp"

using namespace treesb;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const auto dir = fs::temp_directory_path() / "treesb_data_io";
  fs::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << content;
  return path;
}

double skewness(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= v.size();
  double m2 = 0, m3 = 0;
  for (double x : v) {
    m2 += (x - m) * (x - m);
    m3 += (x - m) * (x - m) * (x - m);
  }
  m2 /= v.size();
  m3 /= v.size();
  return m3 / std::pow(m2, 1.5);
}

SkewNormalComponent component(double skew) {
  return {Eigen::Vector2d(1.0, -2.0), Eigen::Matrix2d::Identity(), Eigen::Vector2d(skew, skew)};
}

}  // namespace

TEST(LoadCsv, WellFormed) {
  const auto p = temp_file("ok.csv", "y1,y2,f1,f2\n1,2,1,0\n3,4,1,1\n5,6,1,0\n");
  const auto d = load_csv(p);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.response_dim(), 2);
  EXPECT_EQ(d.feature_dim(), 2);
  EXPECT_EQ(d.num_profiles(), 2u);
  EXPECT_EQ(d.profile_of(2), 0u);
  EXPECT_EQ(d.profile_of(1), 1u);
}

TEST(LoadCsv, MalformedRowReportsLine) {
  const auto p = temp_file("bad.csv", "y1,f1\nabc,1\n");
  try {
    load_csv(p);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(LoadCsv, EmptyAndNonFinite) {
  EXPECT_THROW(load_csv(temp_file("empty.csv", "")), ValidationError);
  EXPECT_THROW(load_csv(temp_file("header_only.csv", "y1,f1\n")), ValidationError);
  EXPECT_THROW(load_csv(temp_file("nan.csv", "y1,f1\nnan,1\n")), ValidationError);
  EXPECT_THROW(load_csv(temp_file("inf.csv", "y1,f1\n1,inf\n")), ValidationError);
  EXPECT_THROW(load_csv(temp_file("header.csv", "a,b\n1,1\n")), ParseError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), NotFound);
}

TEST(SkewNormal, ZeroSkewIsSymmetric) {
  RandomStream rng(1);
  std::vector<double> x;
  for (int i = 0; i < 100000; ++i) x.push_back(sample_skew_normal(component(0.0), rng)[0]);
  // Standard error of the sample skewness is about sqrt(6 / n).
  EXPECT_LT(std::abs(skewness(x)), 3.0 * std::sqrt(6.0 / x.size()));
}

TEST(SkewNormal, PositiveSkewAndShift) {
  RandomStream rng(2);
  std::vector<double> x;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  auto c = component(3.0);
  for (int i = 0; i < 100000; ++i) {
    const auto y = sample_skew_normal(c, rng);
    x.push_back(y[0]);
    mean += y;
  }
  EXPECT_GT(skewness(x), 0.3);
  mean /= 100000.0;
  // Location shift moves the mean by the same amount under common draws.
  RandomStream a(5), b(5);
  auto shifted = c;
  shifted.location += Eigen::Vector2d(3.0, -1.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector2d d = sample_skew_normal(shifted, b) - sample_skew_normal(c, a);
    EXPECT_NEAR(d[0], 3.0, 1e-12);
    EXPECT_NEAR(d[1], -1.0, 1e-12);
  }
  // Mean of delta |z0| + ... is delta sqrt(2 / pi).
  const double delta = 3.0 / std::sqrt(10.0);
  EXPECT_NEAR(mean[0], 1.0 + delta * std::sqrt(2.0 / std::numbers::pi), 0.02);
}

TEST(BenchmarkDesign, FullScaleIndependent) {
  const auto d = benchmark_design(1.0, false);
  EXPECT_EQ(d.total(), 8000);
  for (const auto& row : d.counts) {
    long n = 0;
    for (long c : row) n += c;
    EXPECT_EQ(n, 1000);
  }
}

TEST(BenchmarkDesign, FullScaleDependentShift) {
  const auto d = benchmark_design(1.0, true);
  // Profiles are ordered by (x1, x2, x3) bits; cluster 8 is index 7.
  long with = 0, without = 0;
  for (std::size_t p = 0; p < 8; ++p) (d.profiles[p][1] > 0.5 ? with : without) += d.counts[p][7];
  EXPECT_EQ(with - without, 4 * 40);
  EXPECT_EQ(d.counts[4][7] - d.counts[0][7], 40);
  const auto indep = benchmark_design(1.0, false);
  EXPECT_EQ(d.cluster_totals(), indep.cluster_totals());
  EXPECT_EQ(d.total(), 8000);
}

TEST(BenchmarkDesign, EighthScale) {
  const auto d = benchmark_design(0.125, false);
  EXPECT_EQ(d.total(), 1000);
  for (const auto& row : d.counts) {
    long n = 0;
    for (long c : row) n += c;
    EXPECT_EQ(n, 125);
  }
  const auto totals = d.cluster_totals();
  const int base[20] = {200, 170, 130, 100, 80, 70, 50, 30, 28, 22, 20, 18, 16, 14, 12, 10, 9, 8, 7, 6};
  for (int j = 0; j < 20; ++j) EXPECT_EQ(totals[j], base[j]);
  const auto dep = benchmark_design(0.125, true);
  EXPECT_EQ(dep.cluster_totals(), totals);
  EXPECT_EQ(dep.total(), 1000);
  // Shifts of 2.5 per profile alternate 3, 2, 3, 2 on each side of x1.
  long with = 0, without = 0;
  for (std::size_t p = 0; p < 8; ++p) {
    (dep.profiles[p][1] > 0.5 ? with : without) += dep.counts[p][7] - d.counts[p][7];
  }
  EXPECT_EQ(with, 10);
  EXPECT_EQ(without, -10);
}

TEST(BenchmarkDesign, ScaleErrors) {
  EXPECT_THROW(benchmark_design(0.1, false), InvalidArgument);
  // Cluster 17 has 8 * 9 / 16 = 4.5 points at scale 1/16.
  EXPECT_THROW(benchmark_design(1.0 / 16, false), InvalidArgument);
  EXPECT_NO_THROW(benchmark_design(0.25, true));
  EXPECT_THROW(benchmark_design(0.05, true), InvalidArgument);
}

TEST(BenchmarkDesign, RetainMergesTail) {
  const auto d = benchmark_design(0.125, false, 6);
  EXPECT_EQ(d.components.size(), 6u);
  const auto totals = d.cluster_totals();
  EXPECT_EQ(totals[0], 200);
  EXPECT_EQ(totals[5], 1000 - 200 - 170 - 130 - 100 - 80);
  EXPECT_EQ(d.total(), 1000);
}

TEST(BenchmarkDesign, GeneratedCountsMatchDesign) {
  RandomStream rng(3);
  const auto g = generate_benchmark(0.125, true, rng);
  const auto& ref = *g.data.reference();
  std::vector<std::vector<long>> counts(8, std::vector<long>(20, 0));
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const auto& f = g.data.features().row(i);
    const auto p = static_cast<std::size_t>(4 * f[1] + 2 * f[2] + f[3]);
    counts[p][ref[i] - 1] += 1;
  }
  EXPECT_EQ(counts, g.design.counts);
  const auto w = design_weights(g.design);
  for (const auto& row : w) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
}

TEST(RoundTrip, WriteThenLoad) {
  RandomStream rng(4);
  const auto g = generate_benchmark(0.125, false, rng);
  std::ostringstream data, labels;
  write_csv(g.data, data);
  write_labels(*g.data.reference(), labels);
  const auto loaded = load_csv(temp_file("rt.csv", data.str()));
  const auto truth = load_labels(temp_file("rt_truth.csv", labels.str()));
  EXPECT_EQ(Dataset(loaded.y(), loaded.features(), truth), g.data);
}

TEST(Design, FileMatchesBuiltIn) {
  const auto loaded = load_design(fs::path(TREESB_SOURCE_DIR) / "data" / "benchmark_components.csv");
  const auto builtin = default_benchmark_components();
  ASSERT_EQ(loaded.size(), builtin.size());
  for (std::size_t j = 0; j < loaded.size(); ++j) {
    EXPECT_TRUE(loaded[j].location.isApprox(builtin[j].location));
    EXPECT_TRUE(loaded[j].scale_chol.isApprox(builtin[j].scale_chol));
    EXPECT_TRUE((loaded[j].skew - builtin[j].skew).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Components are separated by at least four scale units.
  for (std::size_t a = 0; a < builtin.size(); ++a)
    for (std::size_t b = a + 1; b < builtin.size(); ++b)
      EXPECT_GE((builtin[a].location - builtin[b].location).norm(), 4.0 * 1.5);
}
