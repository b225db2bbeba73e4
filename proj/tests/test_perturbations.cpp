#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "prgauge/perturbations.hpp"

using namespace prgauge;

namespace {

std::vector<double> random_image(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> img(static_cast<std::size_t>(shape.size()));
  for (auto& v : img) v = u(rng);
  return img;
}

Matrix row_ids(int n) {
  Matrix x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = i;
  return x;
}

}  // namespace

TEST(PairIntra, SortsByLabelAndKeepsSameLabelPairs) {
  // labels 2,0,1,0,2,1: stable order rows 1,3,2,5,0,4 -> all three pairs match
  const std::vector<int> y = {2, 0, 1, 0, 2, 1};
  const PairedBatch p = pair_intra(row_ids(6), y);
  ASSERT_EQ(p.kept_count(), 3u);
  EXPECT_EQ(p.pair_count, 3u);
  EXPECT_EQ(p.x1(0, 0), 1);
  EXPECT_EQ(p.x2(0, 0), 3);
  EXPECT_EQ(p.x1(1, 0), 2);
  EXPECT_EQ(p.x2(1, 0), 5);
  EXPECT_EQ(p.x1(2, 0), 0);
  EXPECT_EQ(p.x2(2, 0), 4);
  EXPECT_EQ(p.y1, p.y2);
}

TEST(PairIntra, OddClassCountsDropStraddlingPairs) {
  // sorted labels 0,0,0,1,1: pairs (0,0) kept, (0,1) dropped, last row unpaired
  const std::vector<int> y = {0, 1, 0, 1, 0};
  const PairedBatch p = pair_intra(row_ids(5), y);
  EXPECT_EQ(p.pair_count, 2u);
  EXPECT_EQ(p.kept_count(), 1u);
  const std::vector<int> all_distinct = {0, 1, 2, 3};
  EXPECT_TRUE(pair_intra(row_ids(4), all_distinct).empty());
}

TEST(PairInter, KeepsOnlyDifferentLabelsAndIsSeeded) {
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[i] = i % 3;
  Rng a(4), b(4);
  const PairedBatch p = pair_inter(row_ids(40), y, a);
  const PairedBatch q = pair_inter(row_ids(40), y, b);
  EXPECT_EQ(p.x1, q.x1);
  EXPECT_EQ(p.pair_count, 20u);
  EXPECT_GT(p.kept_count(), 0u);
  for (std::size_t i = 0; i < p.kept_count(); ++i) {
    EXPECT_NE(p.y1[i], p.y2[i]);
    EXPECT_EQ(y[static_cast<int>(p.x1(i, 0))], p.y1[i]);
  }
  const std::vector<int> same(10, 1);
  EXPECT_TRUE(pair_inter(row_ids(10), same, a).empty());
}

TEST(Interpolate, EndpointsAndMidpoint) {
  Matrix a(1, 2), b(1, 2);
  a << 1, 2;
  b << 3, 6;
  EXPECT_EQ(interpolate(a, b, 0.0), a);
  EXPECT_EQ(interpolate(a, b, 0.5), (Matrix(1, 2) << 2, 4).finished());
  EXPECT_THROW(interpolate(a, b, 0.6), std::invalid_argument);
}

TEST(Rotate, QuarterTurnIsPixelPermutation) {
  const Shape s{{2, 5, 5}};
  const auto img = random_image(s, 1);
  const auto out = rotate(img, s, 90.0);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 5; ++col)
        EXPECT_NEAR(out[(c * 5 + r) * 5 + col], img[(c * 5 + col) * 5 + (4 - r)], 1e-12);
  EXPECT_EQ(rotate(img, s, 0.0), img);
  const auto full = rotate(rotate(rotate(out, s, 90.0), s, 90.0), s, 90.0);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(full[i], img[i], 1e-12);
}

TEST(Translate, ShiftsAndZeroFills) {
  const Shape s{{1, 4, 4}};
  std::vector<double> img(16);
  for (int i = 0; i < 16; ++i) img[i] = i + 1;
  const auto right = translate(img, s, 0.25, true);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(right[r * 4], 0.0);
    for (int c = 1; c < 4; ++c) EXPECT_EQ(right[r * 4 + c], img[r * 4 + c - 1]);
  }
  const auto up = translate(img, s, -0.25, false);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(up[12 + c], 0.0);
  EXPECT_EQ(up[0], img[4]);
  EXPECT_EQ(translate(img, s, 0.0, true), img);
  EXPECT_THROW(translate(img, s, 0.6, true), std::invalid_argument);
}

TEST(ColorJitter, ZeroIsIdentityAndOutputStaysInRange) {
  const Shape s{{3, 6, 6}};
  const auto img = random_image(s, 2);
  EXPECT_EQ(color_jitter(img, s, 0.0), img);
  for (double a : {-0.25, -0.1, 0.1, 0.25}) {
    const auto out = color_jitter(img, s, a);
    EXPECT_NE(out, img);
    for (double v : out) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  JitterStages hue_only{false, false, false, true};
  // a full turn split in four quarter steps returns to the start
  auto h = img;
  for (int i = 0; i < 4; ++i) h = color_jitter(h, s, 0.25, hue_only);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(h[i], img[i], 1e-12);
  EXPECT_THROW(color_jitter(std::vector<double>(36), Shape{{1, 6, 6}}, 0.1), std::invalid_argument);
}

TEST(GaussianNoise, ZeroMagnitudeIsIdentity) {
  Rng rng(1);
  const Matrix x = Matrix::Random(3, 4);
  EXPECT_EQ(gaussian_noise(x, 0.0, rng), x);
  EXPECT_NE(gaussian_noise(x, 0.1, rng), x);
}

TEST(Grid, ClosedAndHalfOpen) {
  const auto closed = PerturbationSpec::mixup_intra(0).grid(11);
  EXPECT_EQ(closed.front(), 0.0);
  EXPECT_EQ(closed.back(), 0.5);
  EXPECT_NEAR(closed[1], 0.05, 1e-15);
  const auto open = PerturbationSpec::mixup_inter(0).grid(10);
  EXPECT_EQ(open.size(), 10u);
  EXPECT_NEAR(open.back(), 0.45, 1e-15);
  const auto rot = PerturbationSpec::image(PerturbationKind::rotate).grid(360);
  EXPECT_EQ(rot.front(), -180.0);
  EXPECT_EQ(rot.back(), 179.0);
  for (std::size_t i = 1; i < rot.size(); ++i) EXPECT_NEAR(rot[i] - rot[i - 1], 1.0, 1e-12);
}

TEST(Spec, ValidationAndLabels) {
  EXPECT_NO_THROW(PerturbationSpec::image(PerturbationKind::translate_h).validate());
  EXPECT_TRUE(PerturbationSpec::image(PerturbationKind::rotate).signed_range());
  EXPECT_FALSE(PerturbationSpec::mixup_intra(0).signed_range());
  EXPECT_EQ(PerturbationSpec::mixup_inter(2).label(), "mixup_inter_l2");
  PerturbationSpec bad = PerturbationSpec::mixup_intra(0);
  bad.closure = RangeClosure::half_open_upper;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PerturbationSpec::image(PerturbationKind::rotate);
  bad.layer = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PerturbationSpec::mixup_intra(0);
  bad.alpha_max = 0.7;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(perturbation_kind_from_string("shear"), std::invalid_argument);
}

TEST(Spec, JsonRoundTrip) {
  for (const auto& s : {PerturbationSpec::mixup_intra(1), PerturbationSpec::mixup_inter(0),
                        PerturbationSpec::image(PerturbationKind::color_jitter)}) {
    EXPECT_EQ(nlohmann::json(s).get<PerturbationSpec>(), s);
  }
}

TEST(PerturbRows, PerRowMagnitudes) {
  const Shape s{{1, 4, 4}};
  Matrix batch(2, 16);
  for (int i = 0; i < 16; ++i) batch(0, i) = batch(1, i) = i + 1;
  Rng rng(0);
  const std::vector<double> alphas = {0.0, 0.25};
  perturb_rows(batch, s, PerturbationKind::translate_h, alphas, rng);
  EXPECT_EQ(batch(0, 0), 1.0);
  EXPECT_EQ(batch(1, 0), 0.0);
  EXPECT_THROW(perturb_rows(batch, s, PerturbationKind::mixup_intra, 0.1, rng), std::invalid_argument);
}
