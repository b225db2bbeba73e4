#include "prgauge/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prgauge/io.hpp"

namespace prgauge {

std::string to_string(Orientation orientation) {
  return orientation == Orientation::higher_better ? "higher_better" : "lower_better";
}

Orientation orientation_from_string(const std::string& name) {
  if (name == "higher_better") return Orientation::higher_better;
  if (name == "lower_better") return Orientation::lower_better;
  throw std::invalid_argument("unknown orientation '" + name + "'");
}

std::string to_string(PalMode mode) { return mode == PalMode::literal ? "literal" : "cumulative"; }

PalMode pal_mode_from_string(const std::string& name) {
  if (name == "literal") return PalMode::literal;
  if (name == "cumulative") return PalMode::cumulative;
  throw std::invalid_argument("unknown pal_mode '" + name + "'");
}

double gi_score(std::span<const double> alphas, std::span<const double> accuracies) {
  if (alphas.size() != accuracies.size()) throw std::invalid_argument("gi_score: length mismatch");
  if (alphas.size() < 2) throw std::invalid_argument("gi_score: need at least 2 points");
  const std::vector<double> area = cumulative_trapezoid(alphas, accuracies);
  std::vector<double> gap(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) gap[i] = alphas[i] - area[i];
  const double last = alphas.back();
  return trapezoid(alphas, gap) / (0.5 * last * last);
}

double gi_score(const PrCurve& curve) {
  curve.validate();
  if (!curve.normalized()) throw std::invalid_argument("gi_score: curve is not normalized");
  return gi_score(curve.norm_alphas, curve.accuracies);
}

std::optional<double> pal_score(const PrCurve& curve, PalMode mode, bool force) {
  curve.validate();
  if (!curve.normalized()) throw std::invalid_argument("pal_score: curve is not normalized");
  if (curve.spec.signed_range() && !force) {
    throw PalNotApplicable("pal_score: " + to_string(curve.spec.kind) +
                           " spans both signs of the magnitude, so its PR curve is not monotone; Pal is not defined "
                           "for it (pass force to override)");
  }
  const std::size_t n = curve.size();
  if (n < 11) throw std::invalid_argument("pal_score: need at least 11 grid points");
  const auto& alpha = curve.norm_alphas;
  const auto& acc = curve.accuracies;
  // Grids built by PerturbationSpec::grid are regular; rounding in the normalized magnitudes
  // would otherwise leave equal-width segments a few ulps apart and a flat curve off 1.
  const double step = (alpha[n - 1] - alpha[0]) / static_cast<double>(n - 1);
  bool regular = true;
  for (std::size_t i = 0; i + 1 < n && regular; ++i) regular = std::abs(alpha[i + 1] - alpha[i] - step) <= 1e-9 * step;
  std::vector<double> segment(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double width = regular ? step : alpha[i + 1] - alpha[i];
    segment[i + 1] = 0.5 * width * (acc[i] + acc[i + 1]);
  }
  const std::size_t top = 6 * (n - 1) / 10;
  const std::size_t bottom = std::max<std::size_t>(1, (n - 1) / 10);
  double numerator = 0.0, denominator = 0.0;
  if (mode == PalMode::literal) {
    numerator = segment[top];
    denominator = segment[bottom];
  } else {
    for (std::size_t i = (n - 1) - top + 1; i < n; ++i) numerator += segment[i];
    for (std::size_t i = 1; i <= bottom; ++i) denominator += segment[i];
  }
  if (denominator == 0.0) return std::nullopt;
  return numerator / denominator;
}

double point_score(const PrCurve& curve, double alpha0) {
  const double scale = std::max(1.0, std::abs(curve.alphas.back() - curve.alphas.front()));
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (std::abs(curve.alphas[i] - alpha0) <= 1e-12 * scale) return curve.accuracies[i];
  }
  throw std::invalid_argument("point_score: alpha " + format_double(alpha0) +
                              " is not on the curve grid and no model was supplied");
}

double point_score(const Network& net, const Dataset& data, const PerturbationSpec& spec, double alpha0,
                   int batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("point_score: batch_size must be >= 2");
  if (data.size() < 2) throw std::invalid_argument("point_score: need at least 2 samples");
  Rng rng = make_rng(seed, {0x706f696e74ULL});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const Matrix hidden = forward_tap(net, data.inputs, spec.layer);
  std::size_t correct = 0, kept = 0;
  for (std::size_t start = 0; start + 1 < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - start);
    if (len < 2) break;
    const std::span<const std::size_t> rows(order.data() + start, len);
    const Matrix batch = hidden(std::vector<std::size_t>(rows.begin(), rows.end()), Eigen::all);
    std::vector<int> labels;
    for (auto r : rows) labels.push_back(data.labels[r]);
    const BatchCounts counts = perturbed_counts_at_layer(net, batch, labels, spec, alpha0, rng);
    correct += counts.correct;
    kept += counts.kept;
  }
  if (kept == 0) throw std::runtime_error("point_score: every batch dropped all pairs");
  return static_cast<double>(correct) / static_cast<double>(kept);
}

double mean_pr_accuracy(const PrCurve& curve) {
  if (curve.accuracies.empty()) throw std::invalid_argument("mean_pr_accuracy: empty curve");
  return std::accumulate(curve.accuracies.begin(), curve.accuracies.end(), 0.0) /
         static_cast<double>(curve.accuracies.size());
}

double augmented_subset_accuracy(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                                 double subset_fraction, std::uint64_t seed) {
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw std::invalid_argument("augmented_subset_accuracy: subset_fraction must lie in (0, 1]");
  }
  if (spec.is_mixup()) throw std::invalid_argument("augmented_subset_accuracy: needs a per-sample perturbation");
  if (!(spec.alpha_min <= spec.alpha_max)) throw std::invalid_argument("augmented_subset_accuracy: alpha_min > alpha_max");
  const auto count = static_cast<std::size_t>(std::llround(subset_fraction * static_cast<double>(data.size())));
  if (count == 0) throw std::invalid_argument("augmented_subset_accuracy: empty subset");
  Rng rng = make_rng(seed, {0x737562736574ULL});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  Matrix hidden = forward_tap(net, data.inputs(order, Eigen::all), spec.layer);
  std::vector<int> labels;
  for (auto r : order) labels.push_back(data.labels[r]);
  std::vector<double> alphas(count, spec.alpha_min);
  if (spec.alpha_max > spec.alpha_min) {
    std::uniform_real_distribution<double> draw(spec.alpha_min, spec.alpha_max);
    for (double& a : alphas) a = draw(rng);
  }
  perturb_rows(hidden, net.layer_shape(spec.layer), spec.kind, alphas, rng);
  return static_cast<double>(count_correct(forward_from(net, spec.layer, hidden), labels)) / static_cast<double>(count);
}

std::string measure_name(const std::string& stat, const PerturbationSpec& spec) {
  std::string kind;
  switch (spec.kind) {
    case PerturbationKind::mixup_intra: kind = "intra"; break;
    case PerturbationKind::mixup_inter: kind = "inter"; break;
    case PerturbationKind::gaussian_noise: kind = "noise"; break;
    default: kind = to_string(spec.kind);
  }
  const std::string layer = "l" + std::to_string(spec.layer);
  if (stat == "mixup") return "mixup_" + layer;
  return stat + "_" + kind + "_" + layer;
}

std::string scores_to_csv(std::span<const ScoreRow> rows) {
  std::ostringstream out;
  out << "model_id,measure,value,orientation\n";
  for (const auto& row : rows) {
    out << row.model_id << ',' << row.measure.name << ',' << format_double(row.measure.value) << ','
        << to_string(row.measure.orientation) << '\n';
  }
  return out.str();
}

std::vector<ScoreRow> scores_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<ScoreRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    if (!header) {
      if (trimmed != "model_id,measure,value,orientation") throw ParseError(source, line_no, "unexpected column header");
      header = true;
      continue;
    }
    const auto fields = split(trimmed, ',');
    if (fields.size() != 4) throw ParseError(source, line_no, "expected 4 columns");
    try {
      rows.push_back({fields[0], {fields[1], parse_double(fields[2], source, line_no), orientation_from_string(fields[3])}});
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!header) throw ParseError(source, line_no, "missing column header");
  return rows;
}

nlohmann::json scores_to_json(std::span<const ScoreRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    out.push_back({{"model_id", row.model_id},
                   {"measure", row.measure.name},
                   {"value", row.measure.value},
                   {"orientation", to_string(row.measure.orientation)}});
  }
  return out;
}

}  // namespace prgauge
