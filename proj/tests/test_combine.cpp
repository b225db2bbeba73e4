#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "prgauge/combine.hpp"

using namespace prgauge;

namespace {

ScoreMatrix two_columns(const std::vector<double>& a, const std::vector<double>& b, const std::string& na = "gi_intra_l0",
                        const std::string& nb = "mixup_l0") {
  ScoreMatrix m;
  for (std::size_t i = 0; i < a.size(); ++i) m.model_ids.push_back("m" + std::to_string(i));
  m.columns.push_back({na, a, Orientation::lower_better, false});
  m.columns.push_back({nb, b, Orientation::higher_better, false});
  return m;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Quadratic-time reference: rank = 1 + #smaller + (#equal - 1) / 2.
std::vector<double> naive_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

}  // namespace

TEST(Pca, MatchesClosedFormTwoByTwo) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_values(30, rng), b = random_values(30, rng);
    for (std::size_t i = 0; i < a.size(); ++i) b[i] += 0.7 * a[i];
    const ScoreMatrix m = two_columns(a, b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i] / 30;
      mb += b[i] / 30;
    }
    double caa = 0, cbb = 0, cab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      caa += (a[i] - ma) * (a[i] - ma) / 29;
      cbb += (b[i] - mb) * (b[i] - mb) / 29;
      cab += (a[i] - ma) * (b[i] - mb) / 29;
    }
    const double lambda = 0.5 * (caa + cbb) + std::sqrt(0.25 * (caa - cbb) * (caa - cbb) + cab * cab);
    double v0 = cab, v1 = lambda - caa;
    const double norm = std::hypot(v0, v1);
    v0 /= norm;
    v1 /= norm;
    std::vector<double> expect(a.size());
    double corr = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      expect[i] = (a[i] - ma) * v0 + (b[i] - mb) * v1;
      corr += expect[i] * (a[i] - ma);
    }
    if (corr < 0) for (auto& e : expect) e = -e;
    const auto got = pca_combine(m, false);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-8);
  }
}

TEST(Pca, PowerIterationOnDiagonalAndDegenerate) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c.diagonal() << 1.0, 4.0, 2.0;
  const Eigen::VectorXd v = first_principal_component(c);
  EXPECT_NEAR(std::abs(v(1)), 1.0, 1e-12);
  EXPECT_THROW(first_principal_component(Eigen::MatrixXd::Zero(2, 2)), std::invalid_argument);
}

TEST(Npca, StandardizesColumns) {
  const ScoreMatrix m = two_columns({1, 2, 3, 4}, {10, 20, 30, 40});
  const auto p = pca_combine(m, true);
  // identical standardized columns: projection = sqrt(2) * z
  const double sd = std::sqrt(5.0 / 3.0);
  EXPECT_NEAR(p[0], std::sqrt(2.0) * (1 - 2.5) / sd, 1e-12);
  EXPECT_THROW(pca_combine(two_columns({1, 1, 1}, {1, 2, 3}), true), std::invalid_argument);
}

TEST(AvgRank, MatchesNaiveReferenceWithTies) {
  Rng rng(8);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(25), b(25);
    for (auto& x : a) x = small(rng);
    for (auto& x : b) x = small(rng);
    EXPECT_EQ(average_ranks(a), naive_ranks(a));
    const auto got = avg_rank(two_columns(a, b));
    const auto ra = naive_ranks(a), rb = naive_ranks(b);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(got[i], 0.5 * (ra[i] + rb[i]));
  }
}

TEST(Simple, AvgProdAndProdAvg) {
  const ScoreMatrix m = two_columns({1, 2}, {3, 5});
  EXPECT_EQ(avg(m), (std::vector<double>{2, 3.5}));
  EXPECT_EQ(prod(m), (std::vector<double>{3, 10}));
  EXPECT_EQ(prod_plus_avg(m), (std::vector<double>{5, 13.5}));
  ScoreMatrix three = m;
  three.columns.push_back({"x", {0, 0}, Orientation::lower_better, false});
  EXPECT_THROW(prod(three), std::invalid_argument);
}

TEST(Orient, NegatesPalOnlyWhenMixedWithGi) {
  const ScoreMatrix mixed = two_columns({0.1, 0.2}, {0.5, 0.9}, "gi_intra_l0", "pal_intra_l0");
  const ScoreMatrix once = orient(mixed);
  EXPECT_EQ(once.columns[1].values, (std::vector<double>{-0.5, -0.9}));
  EXPECT_TRUE(once.columns[1].negated);
  EXPECT_EQ(once.columns[0].values, mixed.columns[0].values);
  const ScoreMatrix twice = orient(once);
  EXPECT_EQ(twice.columns[1].values, once.columns[1].values);
  const ScoreMatrix pal_only = two_columns({0.1, 0.2}, {0.5, 0.9}, "pal_intra_l0", "mixup_l0");
  EXPECT_EQ(orient(pal_only).columns[0].values, pal_only.columns[0].values);
}

TEST(Combine, ParsesAndAppliesSpecs) {
  const CombinationSpec s = CombinationSpec::parse("avg_rank:gi_intra_l0+pal_intra_l0");
  EXPECT_EQ(s.method, CombineMethod::avg_rank);
  EXPECT_EQ(s.label(), "avg_rank:gi_intra_l0+pal_intra_l0");
  EXPECT_THROW(CombinationSpec::parse("pca:gi_intra_l0"), std::invalid_argument);
  EXPECT_THROW(CombinationSpec::parse("median:a+b"), std::invalid_argument);
  EXPECT_THROW(CombinationSpec::parse("avg:a++b"), std::invalid_argument);
  const ScoreMatrix m = two_columns({0.1, 0.3, 0.2}, {0.9, 0.5, 0.7}, "gi_intra_l0", "pal_intra_l0");
  // Pal negated: ranks of {-0.9, -0.5, -0.7} are 1, 3, 2; Gi ranks 1, 3, 2
  EXPECT_EQ(combine(m, s), (std::vector<double>{1, 3, 2}));
  EXPECT_THROW(combine(m, CombinationSpec::parse("avg:gi_intra_l0+mixup_l9")), std::invalid_argument);
}

TEST(ScoreMatrixBuild, ExcludesIncompleteModels) {
  std::vector<ScoreRow> rows = {{"a", {"gi_intra_l0", 0.1, Orientation::lower_better}},
                                {"a", {"mixup_l0", 0.8, Orientation::higher_better}},
                                {"b", {"gi_intra_l0", 0.2, Orientation::lower_better}}};
  std::vector<std::string> excluded;
  const std::vector<std::string> measures = {"gi_intra_l0", "mixup_l0"};
  const ScoreMatrix m = score_matrix(rows, measures, &excluded);
  EXPECT_EQ(m.model_ids, std::vector<std::string>{"a"});
  EXPECT_EQ(excluded, std::vector<std::string>{"b"});
}
