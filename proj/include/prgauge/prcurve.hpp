#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prgauge/data.hpp"
#include "prgauge/nn.hpp"
#include "prgauge/perturbations.hpp"

namespace prgauge {

/// Perturbation-response curve: accuracy under T_alpha at each grid magnitude.
struct PrCurve {
  std::vector<double> alphas;
  std::vector<double> norm_alphas;  // empty until normalize()
  std::vector<double> accuracies;
  std::vector<std::size_t> kept_counts;
  PerturbationSpec spec;
  std::string model_id;
  std::uint64_t seed = 0;
  int n_batches = 0;
  int batch_size = 0;

  std::size_t size() const { return alphas.size(); }
  bool normalized() const;
  void validate() const;
  /// Largest binomial standard error sqrt(p(1-p)/kept) over the grid.
  double max_standard_error() const;
};

/// Cumulative trapezoid integral of a PR curve over normalized magnitudes.
struct PcdCurve {
  std::vector<double> norm_alphas;
  std::vector<double> cumulative;
};

struct BatchCounts {
  std::size_t correct = 0;
  std::size_t kept = 0;
};

/// Taps x^(layer), applies T_alpha (pairing first for mixup kinds, labels taken from
/// the (1 - alpha)-weighted endpoint), resumes f_layer and counts argmax hits.
/// kept == 0 signals an empty pairing.
BatchCounts batch_perturbed_accuracy(const Network& net, const Matrix& batch, std::span<const int> labels,
                                     const PerturbationSpec& spec, double alpha, Rng& rng);

/// Same, for a batch that is already the layer representation x^(spec.layer).
BatchCounts perturbed_counts_at_layer(const Network& net, const Matrix& hidden, std::span<const int> labels,
                                      const PerturbationSpec& spec, double alpha, Rng& rng);

struct PrCurveOptions {
  int n_points = 11;
  int n_batches = 16;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

/// For each grid magnitude: reshuffle the data, take n_batches consecutive batches and
/// aggregate sum(correct) / sum(kept). When the batches outrun the data the order is
/// reshuffled and slicing restarts. Returned curve is normalized.
PrCurve build_pr_curve(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                       const PrCurveOptions& options, const std::string& model_id = "");

/// Curve from explicit arrays (already measured or synthetic); normalized.
PrCurve make_curve(std::vector<double> alphas, std::vector<double> accuracies,
                   PerturbationSpec spec = PerturbationSpec::mixup_intra(0));

/// norm_alpha_i = (alpha_i - alpha_0) / (alpha_last - alpha_0).
PrCurve normalize(PrCurve curve);
PcdCurve pcd(const PrCurve& curve);

double trapezoid(std::span<const double> x, std::span<const double> y);
std::vector<double> cumulative_trapezoid(std::span<const double> x, std::span<const double> y);

std::string curve_to_csv(const PrCurve& curve);
PrCurve curve_from_csv(const std::string& text, const std::string& source = "<curve>");
void write_curve_csv(const std::filesystem::path& path, const PrCurve& curve);
PrCurve read_curve_csv(const std::filesystem::path& path);

}  // namespace prgauge
