#include "prgauge/prcurve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prgauge/io.hpp"

namespace prgauge {

bool PrCurve::normalized() const {
  return norm_alphas.size() == alphas.size() && norm_alphas.size() >= 2 && norm_alphas.front() == 0.0 &&
         norm_alphas.back() == 1.0;
}

void PrCurve::validate() const {
  if (alphas.size() < 2) throw std::invalid_argument("PR curve needs at least 2 magnitudes");
  if (accuracies.size() != alphas.size()) throw std::invalid_argument("PR curve: alpha/accuracy length mismatch");
  if (!kept_counts.empty() && kept_counts.size() != alphas.size()) {
    throw std::invalid_argument("PR curve: kept_count length mismatch");
  }
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1])) throw std::invalid_argument("PR curve: alphas must be strictly increasing");
  }
  for (double a : accuracies) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("PR curve: accuracy outside [0, 1]");
  }
}

double PrCurve::max_standard_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < kept_counts.size(); ++i) {
    if (kept_counts[i] == 0) continue;
    const double p = accuracies[i];
    worst = std::max(worst, std::sqrt(p * (1.0 - p) / static_cast<double>(kept_counts[i])));
  }
  return worst;
}

BatchCounts perturbed_counts_at_layer(const Network& net, const Matrix& hidden, std::span<const int> labels,
                                      const PerturbationSpec& spec, double alpha, Rng& rng) {
  if (static_cast<std::size_t>(hidden.rows()) != labels.size()) {
    throw std::invalid_argument("perturbed accuracy: representation/label count mismatch");
  }
  const int layer = spec.layer;
  if (spec.is_mixup()) {
    const PairedBatch pairs = spec.kind == PerturbationKind::mixup_intra ? pair_intra(hidden, labels)
                                                                         : pair_inter(hidden, labels, rng);
    if (pairs.empty()) return {};
    const Matrix probs = forward_from(net, layer, interpolate(pairs.x1, pairs.x2, alpha));
    return {count_correct(probs, pairs.y1), pairs.kept_count()};
  }
  Matrix perturbed = hidden;
  if (spec.requires_image() && layer != 0) throw std::invalid_argument(to_string(spec.kind) + ": only valid at layer 0");
  perturb_rows(perturbed, net.layer_shape(layer), spec.kind, alpha, rng);
  const Matrix probs = forward_from(net, layer, perturbed);
  return {count_correct(probs, labels), labels.size()};
}

BatchCounts batch_perturbed_accuracy(const Network& net, const Matrix& batch, std::span<const int> labels,
                                     const PerturbationSpec& spec, double alpha, Rng& rng) {
  if (spec.layer > net.num_layers()) {
    throw std::invalid_argument("perturbation layer " + std::to_string(spec.layer) + " beyond network depth " +
                                std::to_string(net.num_layers()));
  }
  if (spec.requires_image() && !net.input_shape().is_image()) {
    throw std::invalid_argument(to_string(spec.kind) + " needs image inputs");
  }
  return perturbed_counts_at_layer(net, forward_tap(net, batch, spec.layer), labels, spec, alpha, rng);
}

PrCurve build_pr_curve(const Network& net, const Dataset& data, const PerturbationSpec& spec,
                       const PrCurveOptions& options, const std::string& model_id) {
  spec.validate();
  if (options.n_points < 2) throw std::invalid_argument("build_pr_curve: n_p must be >= 2");
  if (options.n_batches < 1) throw std::invalid_argument("build_pr_curve: n_b must be >= 1");
  if (options.batch_size < 2) throw std::invalid_argument("build_pr_curve: b_s must be >= 2");
  if (data.size() < static_cast<std::size_t>(options.batch_size)) {
    throw std::invalid_argument("build_pr_curve: dataset smaller than one batch");
  }
  if (spec.layer > net.num_layers()) throw std::invalid_argument("build_pr_curve: network has no layer " + std::to_string(spec.layer));
  if (spec.requires_image() && !data.shape.is_image()) {
    throw std::invalid_argument("build_pr_curve: " + to_string(spec.kind) + " needs image data");
  }

  // x^(l) does not depend on alpha: tap once, slice batches from it
  const Matrix hidden = forward_tap(net, data.inputs, spec.layer);
  const std::size_t n = data.size();
  const auto bs = static_cast<std::size_t>(options.batch_size);

  PrCurve curve;
  curve.spec = spec;
  curve.model_id = model_id;
  curve.seed = options.seed;
  curve.n_batches = options.n_batches;
  curve.batch_size = options.batch_size;
  curve.alphas = spec.grid(options.n_points);

  std::vector<std::size_t> order(n);
  Matrix batch(static_cast<Eigen::Index>(bs), hidden.cols());
  std::vector<int> labels(bs);
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    const double alpha = curve.alphas[i];
    Rng rng = make_rng(options.seed, {static_cast<std::uint64_t>(i)});
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0, correct = 0, kept = 0;
    for (int k = 0; k < options.n_batches; ++k) {
      if (cursor + bs > n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      for (std::size_t j = 0; j < bs; ++j) {
        batch.row(static_cast<Eigen::Index>(j)) = hidden.row(static_cast<Eigen::Index>(order[cursor + j]));
        labels[j] = data.labels[order[cursor + j]];
      }
      cursor += bs;
      const BatchCounts counts = perturbed_counts_at_layer(net, batch, labels, spec, alpha, rng);
      correct += counts.correct;
      kept += counts.kept;
    }
    if (kept == 0) {
      throw std::runtime_error("build_pr_curve: every batch dropped all pairs at alpha=" + format_double(alpha));
    }
    curve.accuracies.push_back(static_cast<double>(correct) / static_cast<double>(kept));
    curve.kept_counts.push_back(kept);
  }
  return normalize(std::move(curve));
}

PrCurve make_curve(std::vector<double> alphas, std::vector<double> accuracies, PerturbationSpec spec) {
  PrCurve curve;
  curve.alphas = std::move(alphas);
  curve.accuracies = std::move(accuracies);
  curve.spec = spec;
  return normalize(std::move(curve));
}

PrCurve normalize(PrCurve curve) {
  curve.validate();
  const double lo = curve.alphas.front(), hi = curve.alphas.back();
  if (!(hi > lo)) throw std::invalid_argument("normalize: degenerate magnitude range");
  curve.norm_alphas.resize(curve.alphas.size());
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) curve.norm_alphas[i] = (curve.alphas[i] - lo) / (hi - lo);
  curve.norm_alphas.front() = 0.0;
  curve.norm_alphas.back() = 1.0;
  return curve;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: length mismatch");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) area += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return area;
}

std::vector<double> cumulative_trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("cumulative_trapezoid: length mismatch");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) out[i] = out[i - 1] + 0.5 * (x[i] - x[i - 1]) * (y[i - 1] + y[i]);
  return out;
}

PcdCurve pcd(const PrCurve& curve) {
  curve.validate();
  if (!curve.normalized()) throw std::invalid_argument("pcd: curve is not normalized");
  return {curve.norm_alphas, cumulative_trapezoid(curve.norm_alphas, curve.accuracies)};
}

std::string curve_to_csv(const PrCurve& curve) {
  if (!curve.normalized()) throw std::invalid_argument("curve_to_csv: curve is not normalized");
  std::ostringstream out;
  out << "# prgauge pr-curve v1\n";
  out << "# model_id=" << curve.model_id << '\n';
  out << "# spec=" << nlohmann::json(curve.spec).dump() << '\n';
  out << "# seed=" << curve.seed << '\n';
  out << "# n_b=" << curve.n_batches << '\n';
  out << "# b_s=" << curve.batch_size << '\n';
  out << "# stderr_max=" << format_double(curve.max_standard_error()) << '\n';
  out << "alpha,norm_alpha,accuracy,kept_count\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << format_double(curve.alphas[i]) << ',' << format_double(curve.norm_alphas[i]) << ','
        << format_double(curve.accuracies[i]) << ',' << (curve.kept_counts.empty() ? 0 : curve.kept_counts[i]) << '\n';
  }
  return out.str();
}

PrCurve curve_from_csv(const std::string& text, const std::string& source) {
  PrCurve curve;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    if (trimmed[0] == '#') {
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(trimmed.substr(1, eq - 1));
      const std::string value = trim(trimmed.substr(eq + 1));
      try {
        if (key == "model_id") curve.model_id = value;
        else if (key == "spec") curve.spec = nlohmann::json::parse(value).get<PerturbationSpec>();
        else if (key == "seed") curve.seed = std::stoull(value);
        else if (key == "n_b") curve.n_batches = std::stoi(value);
        else if (key == "b_s") curve.batch_size = std::stoi(value);
      } catch (const std::exception& e) {
        throw ParseError(source, line_no, "bad header field '" + key + "': " + e.what());
      }
      continue;
    }
    if (!header_seen) {
      if (trimmed != "alpha,norm_alpha,accuracy,kept_count") throw ParseError(source, line_no, "unexpected column header");
      header_seen = true;
      continue;
    }
    const auto fields = split(trimmed, ',');
    if (fields.size() != 4) throw ParseError(source, line_no, "expected 4 columns, got " + std::to_string(fields.size()));
    curve.alphas.push_back(parse_double(fields[0], source, line_no));
    curve.norm_alphas.push_back(parse_double(fields[1], source, line_no));
    const double acc = parse_double(fields[2], source, line_no);
    if (!(acc >= 0.0 && acc <= 1.0)) throw ParseError(source, line_no, "accuracy outside [0, 1]");
    curve.accuracies.push_back(acc);
    const double kept = parse_double(fields[3], source, line_no);
    if (kept < 0 || kept != std::floor(kept)) throw ParseError(source, line_no, "kept_count must be a non-negative integer");
    curve.kept_counts.push_back(static_cast<std::size_t>(kept));
  }
  if (!header_seen) throw ParseError(source, line_no, "missing column header");
  if (curve.alphas.size() < 2) throw ParseError(source, line_no, "curve needs at least 2 rows");
  try {
    curve.validate();
  } catch (const std::exception& e) {
    throw ParseError(source, line_no, e.what());
  }
  return curve;
}

void write_curve_csv(const std::filesystem::path& path, const PrCurve& curve) { write_text_file(path, curve_to_csv(curve)); }

PrCurve read_curve_csv(const std::filesystem::path& path) { return curve_from_csv(read_text_file(path), path.string()); }

}  // namespace prgauge
