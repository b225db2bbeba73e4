#include <algorithm>
#include <filesystem>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "prgauge/data.hpp"
#include "prgauge/io.hpp"

using namespace prgauge;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "prgauge_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<int> class_counts(const Dataset& d) {
  std::vector<int> c(static_cast<std::size_t>(d.num_classes), 0);
  for (int y : d.labels) ++c[y];
  return c;
}

}  // namespace

TEST(Blobs, DeterministicBalancedAndSeeded) {
  const Dataset a = gen_blobs(4, 200, 6, 1.0, 3);
  const Dataset b = gen_blobs(4, 200, 6, 1.0, 3);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(gen_blobs(4, 200, 6, 1.0, 4).inputs, a.inputs);
  EXPECT_EQ(a.shape, Shape{{6}});
  EXPECT_EQ(class_counts(a), std::vector<int>(4, 50));
  EXPECT_THROW(gen_blobs(1, 10, 2, 1.0, 0), std::invalid_argument);
}

TEST(Glyphs, ImagesInUnitRangeAndClassesDiffer) {
  const Dataset g = gen_glyphs(4, 80, 12, 5);
  EXPECT_EQ(g.shape, (Shape{{3, 12, 12}}));
  EXPECT_GE(g.inputs.minCoeff(), 0.0);
  EXPECT_LE(g.inputs.maxCoeff(), 1.0);
  EXPECT_EQ(class_counts(g), std::vector<int>(4, 20));
  EXPECT_EQ(gen_glyphs(4, 80, 12, 5).inputs, g.inputs);
  // masks of distinct glyphs differ
  std::set<std::vector<double>> masks;
  for (int k = 0; k < kGlyphCount; ++k) masks.insert(render_glyph_mask(static_cast<Glyph>(k), 12, 5.5, 5.5, 4.0));
  EXPECT_EQ(masks.size(), static_cast<std::size_t>(kGlyphCount));
}

TEST(Split, StratifiedDisjointAndComplete) {
  const Dataset d = gen_blobs(4, 400, 3, 1.0, 1);
  const TrainTestSplit s = split_dataset(d, 0.25, 9);
  EXPECT_EQ(s.train.size() + s.test.size(), d.size());
  EXPECT_EQ(class_counts(s.test), std::vector<int>(4, 25));
  EXPECT_EQ(class_counts(s.train), std::vector<int>(4, 75));
  std::multiset<std::vector<double>> all, parts;
  auto rows = [](const Dataset& x, std::multiset<std::vector<double>>& out) {
    for (Eigen::Index i = 0; i < x.inputs.rows(); ++i) {
      std::vector<double> r(x.inputs.row(i).data(), x.inputs.row(i).data() + x.inputs.cols());
      r.push_back(x.labels[i]);
      out.insert(r);
    }
  };
  rows(d, all);
  rows(s.train, parts);
  rows(s.test, parts);
  EXPECT_EQ(all, parts);
  EXPECT_THROW(split_dataset(d, 1.0, 0), std::invalid_argument);
}

TEST(DatasetFile, RoundTripAtFloatPrecision) {
  const Dataset d = gen_glyphs(3, 30, 8, 2);
  const auto path = scratch("g.prgd");
  write_dataset(path, d);
  const Dataset back = read_dataset(path);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.shape, d.shape);
  EXPECT_EQ(back.num_classes, 3);
  EXPECT_EQ(back.inputs, d.inputs.cast<float>().cast<double>());
  write_text_file(path, "NOPE");
  EXPECT_THROW(read_dataset(path), std::runtime_error);
}

TEST(Augment, NoneIsIdentity) {
  const Dataset d = gen_glyphs(3, 12, 8, 2);
  Matrix x = d.inputs;
  Rng rng(1);
  augment(x, d.shape, {AugmentLevel::none, PerturbationSpec::image(PerturbationKind::rotate)}, rng);
  EXPECT_EQ(x, d.inputs);
  augment(x, d.shape, {AugmentLevel::full, PerturbationSpec::image(PerturbationKind::rotate)}, rng);
  EXPECT_NE(x, d.inputs);
}

TEST(Augment, PartialRangeHalvesDistanceFromIdentity) {
  const AugmentRegime rot{AugmentLevel::partial, PerturbationSpec::image(PerturbationKind::rotate)};
  EXPECT_EQ(rot.magnitude_range(), std::make_pair(-90.0, 89.5));
  const AugmentRegime tr{AugmentLevel::partial, PerturbationSpec::image(PerturbationKind::translate_v)};
  EXPECT_EQ(tr.magnitude_range(), std::make_pair(-0.25, 0.25));
  const AugmentRegime full{AugmentLevel::full, PerturbationSpec::image(PerturbationKind::rotate)};
  EXPECT_EQ(full.magnitude_range(), std::make_pair(-180.0, 179.0));
  const AugmentRegime none{AugmentLevel::none, PerturbationSpec::image(PerturbationKind::rotate)};
  EXPECT_EQ(none.magnitude_range(), std::make_pair(0.0, 0.0));
}

TEST(Augment, RejectsMixupAndVectorImages) {
  Matrix x = Matrix::Zero(2, 4);
  Rng rng(0);
  EXPECT_THROW(augment(x, Shape{{4}}, {AugmentLevel::full, PerturbationSpec::mixup_intra(0)}, rng),
               std::invalid_argument);
  EXPECT_THROW(augment(x, Shape{{4}}, {AugmentLevel::full, PerturbationSpec::image(PerturbationKind::rotate)}, rng),
               std::invalid_argument);
}
