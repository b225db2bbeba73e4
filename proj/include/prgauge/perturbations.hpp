#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prgauge/nn.hpp"
#include "prgauge/random.hpp"

namespace prgauge {

enum class PerturbationKind { mixup_intra, mixup_inter, gaussian_noise, rotate, translate_h, translate_v, color_jitter };
enum class RangeClosure { closed, half_open_upper };

std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(const std::string& name);
std::string to_string(RangeClosure closure);
RangeClosure range_closure_from_string(const std::string& name);

/// A parametric perturbation T_alpha applied to the output of layer `layer`.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::mixup_intra;
  double alpha_min = 0.0;
  double alpha_max = 0.5;
  int layer = 0;
  RangeClosure closure = RangeClosure::closed;

  void validate() const;

  /// n regularly spaced magnitudes. Closed grids end at alpha_max; half-open
  /// grids step (alpha_max - alpha_min) / n and never reach it.
  std::vector<double> grid(int n_points) const;

  /// Magnitude at which the perturbation is the identity.
  double identity_magnitude() const { return 0.0; }
  bool is_mixup() const;
  bool requires_image() const;
  /// True when the range straddles the identity (e.g. -90..90 degrees).
  bool signed_range() const { return alpha_min < identity_magnitude() && identity_magnitude() < alpha_max; }

  /// Short stable label, e.g. "mixup_intra_l0" or "rotate_l0".
  std::string label() const;

  static PerturbationSpec mixup_intra(int layer);
  static PerturbationSpec mixup_inter(int layer);
  /// Image perturbation with the CIFAR-10 magnitude range.
  static PerturbationSpec image(PerturbationKind kind);

  bool operator==(const PerturbationSpec&) const = default;
};

void to_json(nlohmann::json& j, const PerturbationSpec& spec);
void from_json(const nlohmann::json& j, PerturbationSpec& spec);

/// Pairs drawn from one batch of representations; row i of x1 pairs with row i of x2.
struct PairedBatch {
  Matrix x1;
  Matrix x2;
  std::vector<int> y1;
  std::vector<int> y2;
  std::size_t pair_count = 0;  // pairs formed before label filtering

  std::size_t kept_count() const { return y1.size(); }
  bool empty() const { return y1.empty(); }
};

/// Sort by label, pair even with odd positions, keep same-label pairs.
PairedBatch pair_intra(const Matrix& x, std::span<const int> labels);
/// Random consecutive pairs, keep different-label pairs.
PairedBatch pair_inter(const Matrix& x, std::span<const int> labels, Rng& rng);

/// (1 - alpha) * x1 + alpha * x2, alpha in [0, 0.5].
Matrix interpolate(const Matrix& x1, const Matrix& x2, double alpha);

/// Counter-clockwise rotation about the image centre, bilinear sampling, zero fill.
std::vector<double> rotate(std::span<const double> image, const Shape& shape, double degrees);
/// Shift by round(fraction * extent) pixels; positive is right (horizontal) or down (vertical).
std::vector<double> translate(std::span<const double> image, const Shape& shape, double fraction, bool horizontal);

struct JitterStages {
  bool brightness = true;
  bool contrast = true;
  bool saturation = true;
  bool hue = true;
};
/// Brightness, contrast, saturation, then hue rotation by `amount` of the colour circle;
/// all stages share the magnitude. Output clamped to [0, 1].
std::vector<double> color_jitter(std::span<const double> image, const Shape& shape, double amount,
                                 JitterStages stages = {});

Matrix gaussian_noise(const Matrix& x, double alpha, Rng& rng);

/// Applies a per-sample perturbation (every kind except mixup) to each row in place.
void perturb_rows(Matrix& batch, const Shape& shape, PerturbationKind kind, double alpha, Rng& rng);
/// Like perturb_rows, but with an independent magnitude per row.
void perturb_rows(Matrix& batch, const Shape& shape, PerturbationKind kind, std::span<const double> alphas, Rng& rng);

}  // namespace prgauge
