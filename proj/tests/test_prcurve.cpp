#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "prgauge/data.hpp"
#include "prgauge/io.hpp"
#include "prgauge/prcurve.hpp"

using namespace prgauge;

namespace {

// Two-input network whose prediction is the argmax of its input.
Network identity_net() {
  DenseLayer dense{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)};
  return Network(Shape{{2}}, 2, {dense, SoftmaxLayer{}});
}

Dataset small_blobs() { return gen_blobs(3, 90, 4, 0.5, 5); }

}  // namespace

TEST(Trapezoid, HandValues) {
  const std::vector<double> x = {0, 0.5, 1}, y = {1, 0.5, 0};
  EXPECT_DOUBLE_EQ(trapezoid(x, y), 0.5);
  const auto c = cumulative_trapezoid(x, y);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(c[1], 0.375);
  EXPECT_DOUBLE_EQ(c[2], 0.5);
}

TEST(Normalize, MapsRangeToUnitInterval) {
  const PrCurve c = make_curve({-180, -90, 0, 90, 179}, {1, 1, 1, 1, 1}, PerturbationSpec::image(PerturbationKind::rotate));
  EXPECT_EQ(c.norm_alphas.front(), 0.0);
  EXPECT_EQ(c.norm_alphas.back(), 1.0);
  EXPECT_NEAR(c.norm_alphas[2], 180.0 / 359.0, 1e-15);
  EXPECT_THROW(make_curve({0, 0}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(make_curve({0, 1}, {1, 1.5}), std::invalid_argument);
}

TEST(Pcd, IdealizedCurveIsDiagonal) {
  const PcdCurve p = pcd(make_curve({0, 0.1, 0.3, 0.5}, {1, 1, 1, 1}));
  for (std::size_t i = 0; i < p.norm_alphas.size(); ++i) EXPECT_NEAR(p.cumulative[i], p.norm_alphas[i], 1e-15);
}

TEST(BatchAccuracy, KeptCountWeighting) {
  const Network net = identity_net();
  Matrix x(4, 2);
  x << 1, 0, 1, 0, 0, 1, 0, 1;
  const std::vector<int> labels = {0, 0, 1, 0};
  // sorted by label: rows 0,1,3,2; pairs (0,1) kept, (3,2) dropped
  Rng rng(1);
  const BatchCounts counts = batch_perturbed_accuracy(net, x, labels, PerturbationSpec::mixup_intra(0), 0.5, rng);
  EXPECT_EQ(counts.kept, 1u);
  EXPECT_EQ(counts.correct, 1u);
}

TEST(BuildPrCurve, IdentityMagnitudeMatchesPlainAccuracy) {
  const Dataset data = small_blobs();
  const Network net = make_mlp(data.shape, std::vector<int>{8}, 3, 2);
  const PerturbationSpec noise{PerturbationKind::gaussian_noise, 0.0, 1.0, 0, RangeClosure::closed};
  const PrCurve c = build_pr_curve(net, data, noise, {5, 1, static_cast<int>(data.size()), 9});
  EXPECT_DOUBLE_EQ(c.accuracies[0], accuracy(net, data.inputs, data.labels));
  EXPECT_EQ(c.kept_counts[0], data.size());
}

TEST(BuildPrCurve, DeterministicAndSeedSensitive) {
  const Dataset data = small_blobs();
  const Network net = make_mlp(data.shape, std::vector<int>{8}, 3, 2);
  for (const auto& spec : {PerturbationSpec::mixup_intra(0), PerturbationSpec::mixup_inter(1)}) {
    const PrCurve a = build_pr_curve(net, data, spec, {11, 6, 32, 4}, "m");
    const PrCurve b = build_pr_curve(net, data, spec, {11, 6, 32, 4}, "m");
    EXPECT_EQ(curve_to_csv(a), curve_to_csv(b));
    EXPECT_TRUE(a.normalized());
    EXPECT_EQ(a.alphas.size(), 11u);
    EXPECT_GT(a.max_standard_error(), 0.0);
  }
  const PerturbationSpec noise{PerturbationKind::gaussian_noise, 0.0, 3.0, 0, RangeClosure::closed};
  EXPECT_NE(curve_to_csv(build_pr_curve(net, data, noise, {5, 4, 32, 1})),
            curve_to_csv(build_pr_curve(net, data, noise, {5, 4, 32, 2})));
}

TEST(BuildPrCurve, HalfOpenGridExcludesUpperEnd) {
  const Dataset data = small_blobs();
  const Network net = make_mlp(data.shape, std::vector<int>{8}, 3, 2);
  const PrCurve c = build_pr_curve(net, data, PerturbationSpec::mixup_inter(0), {10, 2, 32, 0});
  EXPECT_NEAR(c.alphas.back(), 0.45, 1e-15);
}

TEST(BuildPrCurve, RejectsBadRequests) {
  const Dataset data = small_blobs();
  const Network net = make_mlp(data.shape, std::vector<int>{8}, 3, 2);
  EXPECT_THROW(build_pr_curve(net, data, PerturbationSpec::mixup_intra(9), {}), std::invalid_argument);
  EXPECT_THROW(build_pr_curve(net, data, PerturbationSpec::image(PerturbationKind::rotate), {11, 2, 16, 0}),
               std::invalid_argument);
  EXPECT_THROW(build_pr_curve(net, data, PerturbationSpec::mixup_intra(0), {11, 2, 1000, 0}), std::invalid_argument);
}

TEST(CurveCsv, RoundTripIsExact) {
  const Dataset data = small_blobs();
  const Network net = make_mlp(data.shape, std::vector<int>{8}, 3, 2);
  const PrCurve c = build_pr_curve(net, data, PerturbationSpec::mixup_intra(1), {11, 3, 32, 17}, "m042");
  const std::string text = curve_to_csv(c);
  const PrCurve back = curve_from_csv(text);
  EXPECT_EQ(back.alphas, c.alphas);
  EXPECT_EQ(back.accuracies, c.accuracies);
  EXPECT_EQ(back.kept_counts, c.kept_counts);
  EXPECT_EQ(back.spec, c.spec);
  EXPECT_EQ(back.model_id, "m042");
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(curve_to_csv(back), text);
}

TEST(CurveCsv, MalformedInputReportsLine) {
  const std::string good = curve_to_csv(make_curve({0, 0.5}, {1, 0.5}));
  std::string bad = good;
  bad.replace(bad.rfind("0.5"), 3, "x.y");
  try {
    curve_from_csv(bad, "c.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), static_cast<std::size_t>(std::count(good.begin(), good.end(), '\n')));
  }
}
