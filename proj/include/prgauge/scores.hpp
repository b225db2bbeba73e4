#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prgauge/data.hpp"
#include "prgauge/nn.hpp"
#include "prgauge/prcurve.hpp"

namespace prgauge {

enum class Orientation { higher_better, lower_better };
std::string to_string(Orientation orientation);
Orientation orientation_from_string(const std::string& name);

struct MeasureValue {
  std::string name;
  double value = 0.0;
  Orientation orientation = Orientation::lower_better;
};

/// Gini-style area between the idealized PCD (45 degree line) and the curve's PCD,
/// over the area under the idealized PCD. 0 for a curve that never loses accuracy.
double gi_score(const PrCurve& curve);
/// The same computation on raw arrays, dividing by 0.5 * alpha[n-1]^2.
double gi_score(std::span<const double> alphas, std::span<const double> accuracies);

enum class PalMode { literal, cumulative };
std::string to_string(PalMode mode);
PalMode pal_mode_from_string(const std::string& name);

/// Thrown when Pal is requested for a range that straddles the identity magnitude.
class PalNotApplicable : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Palma-style ratio of trapezoid areas near the 60% and 10% magnitude positions.
///
/// literal: segment areas a[i+1] = 0.5 (alpha[i+1] - alpha[i]) (A[i] + A[i+1]) with
/// top = floor(0.6 (n-1)) and bottom = max(1, floor(0.1 (n-1))); pal = a[top] / a[bottom].
/// cumulative: summed segment area over the top 60% of the range over that of the bottom 10%.
/// Returns nullopt when the denominator area is zero. Requires n >= 11.
std::optional<double> pal_score(const PrCurve& curve, PalMode mode = PalMode::literal, bool force = false);

/// Accuracy stored at grid magnitude alpha0; throws when alpha0 is not on the grid.
double point_score(const PrCurve& curve, double alpha0);
/// Accuracy at alpha0 measured directly: one pass over the data in batches of batch_size.
double point_score(const Network& net, const Dataset& data, const PerturbationSpec& spec, double alpha0,
                   int batch_size, std::uint64_t seed);

double mean_pr_accuracy(const PrCurve& curve);

/// Accuracy on a random subset of the data where each sample is perturbed by an
/// independent magnitude drawn uniformly from [alpha_min, alpha_max].
double augmented_subset_accuracy(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                                 double subset_fraction, std::uint64_t seed);

/// Canonical measure names, e.g. gi_intra_l0, pal_inter_l1, mixup_l0, gi_rotate_l0.
std::string measure_name(const std::string& stat, const PerturbationSpec& spec);

struct ScoreRow {
  std::string model_id;
  MeasureValue measure;
};

std::string scores_to_csv(std::span<const ScoreRow> rows);
std::vector<ScoreRow> scores_from_csv(const std::string& text, const std::string& source = "<scores>");
nlohmann::json scores_to_json(std::span<const ScoreRow> rows);

}  // namespace prgauge
