#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prgauge/nn.hpp"
#include "prgauge/perturbations.hpp"
#include "prgauge/random.hpp"

namespace prgauge {

enum class Split { train, test, all };
std::string to_string(Split split);

struct Dataset {
  Matrix inputs;  // one sample per row; images are C x H x W in [0, 1]
  std::vector<int> labels;
  Shape shape;
  int num_classes = 0;
  Split split = Split::all;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

/// k Gaussian clusters (centres ~ N(0, I), per-point noise ~ spread * N(0, I)),
/// class-balanced, in shuffled order.
Dataset gen_blobs(int num_classes, int n, int dims, double spread, std::uint64_t seed);

enum class Glyph { disk, ring, plus, bar, square, triangle, cross, corner };
inline constexpr int kGlyphCount = 8;
std::string to_string(Glyph glyph);

/// Binary size x size mask of a glyph centred at (cx, cy) with radius `radius` (pixels).
std::vector<double> render_glyph_mask(Glyph glyph, int size, double cx, double cy, double radius);

/// 3 x size x size RGB images: class glyph at jittered position/scale, random foreground
/// colour on a random dark background tint.
Dataset gen_glyphs(int num_classes, int n, int size, std::uint64_t seed);

Dataset take_rows(const Dataset& data, std::span<const std::size_t> rows);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};
/// Class-stratified disjoint split; the union is the input dataset.
TrainTestSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

enum class AugmentLevel { none, partial, full };
std::string to_string(AugmentLevel level);
AugmentLevel augment_level_from_string(const std::string& name);

struct AugmentRegime {
  AugmentLevel level = AugmentLevel::none;
  PerturbationSpec perturbation;

  /// Range magnitudes are drawn from. Partial halves the distance of each end
  /// from the identity magnitude; none collapses to the identity.
  std::pair<double, double> magnitude_range() const;
};

/// Perturbs every row with an independently drawn magnitude. Level none is an exact identity.
void augment(Matrix& batch, const Shape& shape, const AugmentRegime& regime, Rng& rng);

void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);
/// Vector datasets only: columns x0..x{d-1},label.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace prgauge
