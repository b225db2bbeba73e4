#include "prgauge/perturbations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace prgauge {

namespace {

struct KindName {
  PerturbationKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {PerturbationKind::mixup_intra, "mixup_intra"},   {PerturbationKind::mixup_inter, "mixup_inter"},
    {PerturbationKind::gaussian_noise, "gaussian_noise"}, {PerturbationKind::rotate, "rotate"},
    {PerturbationKind::translate_h, "translate_h"},   {PerturbationKind::translate_v, "translate_v"},
    {PerturbationKind::color_jitter, "color_jitter"},
};

void check_image(std::span<const double> image, const Shape& shape, const char* op) {
  if (!shape.is_image()) throw std::invalid_argument(std::string(op) + ": input is not an image (shape " + shape.str() + ")");
  if (static_cast<int>(image.size()) != shape.size()) {
    throw std::invalid_argument(std::string(op) + ": buffer size does not match shape " + shape.str());
  }
}

}  // namespace

std::string to_string(PerturbationKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

PerturbationKind perturbation_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw std::invalid_argument("unknown perturbation kind '" + name + "'");
}

std::string to_string(RangeClosure closure) { return closure == RangeClosure::closed ? "closed" : "half_open_upper"; }

RangeClosure range_closure_from_string(const std::string& name) {
  if (name == "closed") return RangeClosure::closed;
  if (name == "half_open_upper") return RangeClosure::half_open_upper;
  throw std::invalid_argument("unknown range closure '" + name + "'");
}

bool PerturbationSpec::is_mixup() const {
  return kind == PerturbationKind::mixup_intra || kind == PerturbationKind::mixup_inter;
}

bool PerturbationSpec::requires_image() const {
  return kind == PerturbationKind::rotate || kind == PerturbationKind::translate_h ||
         kind == PerturbationKind::translate_v || kind == PerturbationKind::color_jitter;
}

void PerturbationSpec::validate() const {
  const std::string name = to_string(kind);
  if (!std::isfinite(alpha_min) || !std::isfinite(alpha_max) || !(alpha_min < alpha_max)) {
    throw std::invalid_argument(name + ": requires alpha_min < alpha_max");
  }
  if (layer < 0) throw std::invalid_argument(name + ": negative layer");
  if (is_mixup()) {
    if (alpha_min < 0.0 || alpha_max > 0.5) throw std::invalid_argument(name + ": magnitudes must lie in [0, 0.5]");
    if (kind == PerturbationKind::mixup_intra && closure != RangeClosure::closed) {
      throw std::invalid_argument("mixup_intra uses a closed magnitude range");
    }
    if (kind == PerturbationKind::mixup_inter && closure != RangeClosure::half_open_upper) {
      throw std::invalid_argument("mixup_inter uses a half-open magnitude range");
    }
  }
  if (requires_image() && layer != 0) throw std::invalid_argument(name + ": only valid at layer 0");
  if (kind == PerturbationKind::gaussian_noise && alpha_min < 0.0) {
    throw std::invalid_argument("gaussian_noise: magnitudes must be >= 0");
  }
  if ((kind == PerturbationKind::translate_h || kind == PerturbationKind::translate_v) &&
      (alpha_min < -0.5 || alpha_max > 0.5)) {
    throw std::invalid_argument(name + ": fractions must lie in [-0.5, 0.5]");
  }
  if (kind == PerturbationKind::color_jitter && (alpha_min < -0.25 || alpha_max > 0.25)) {
    throw std::invalid_argument("color_jitter: amounts must lie in [-0.25, 0.25]");
  }
}

std::vector<double> PerturbationSpec::grid(int n_points) const {
  if (n_points < 2) throw std::invalid_argument("grid: need at least 2 magnitudes");
  const double width = alpha_max - alpha_min;
  const double steps = closure == RangeClosure::closed ? n_points - 1 : n_points;
  std::vector<double> out(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) out[i] = alpha_min + width * static_cast<double>(i) / steps;
  if (closure == RangeClosure::closed) out.back() = alpha_max;
  return out;
}

std::string PerturbationSpec::label() const { return to_string(kind) + "_l" + std::to_string(layer); }

PerturbationSpec PerturbationSpec::mixup_intra(int layer) {
  return {PerturbationKind::mixup_intra, 0.0, 0.5, layer, RangeClosure::closed};
}

PerturbationSpec PerturbationSpec::mixup_inter(int layer) {
  return {PerturbationKind::mixup_inter, 0.0, 0.5, layer, RangeClosure::half_open_upper};
}

PerturbationSpec PerturbationSpec::image(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::rotate:
      return {kind, -180.0, 179.0, 0, RangeClosure::closed};
    case PerturbationKind::translate_h:
    case PerturbationKind::translate_v:
      return {kind, -0.5, 0.5, 0, RangeClosure::closed};
    case PerturbationKind::color_jitter:
      return {kind, -0.25, 0.25, 0, RangeClosure::closed};
    default:
      throw std::invalid_argument("PerturbationSpec::image: not an image perturbation");
  }
}

void to_json(nlohmann::json& j, const PerturbationSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)},
                     {"min", spec.alpha_min},
                     {"max", spec.alpha_max},
                     {"layer", spec.layer},
                     {"closure", to_string(spec.closure)}};
}

void from_json(const nlohmann::json& j, PerturbationSpec& spec) {
  spec.kind = perturbation_kind_from_string(j.at("kind").get<std::string>());
  PerturbationSpec defaults;
  switch (spec.kind) {
    case PerturbationKind::mixup_intra:
      defaults = PerturbationSpec::mixup_intra(0);
      break;
    case PerturbationKind::mixup_inter:
      defaults = PerturbationSpec::mixup_inter(0);
      break;
    case PerturbationKind::gaussian_noise:
      defaults = {spec.kind, 0.0, 1.0, 0, RangeClosure::closed};
      break;
    default:
      defaults = PerturbationSpec::image(spec.kind);
  }
  spec.alpha_min = j.value("min", defaults.alpha_min);
  spec.alpha_max = j.value("max", defaults.alpha_max);
  spec.layer = j.value("layer", 0);
  spec.closure = j.contains("closure") ? range_closure_from_string(j.at("closure").get<std::string>()) : defaults.closure;
  spec.validate();
}

PairedBatch pair_intra(const Matrix& x, std::span<const int> labels) {
  if (labels.size() < 2) throw std::invalid_argument("pair_intra: batch size must be >= 2");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw std::invalid_argument("pair_intra: size mismatch");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  PairedBatch out;
  out.pair_count = labels.size() / 2;
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < out.pair_count; ++i) {
    const std::size_t a = order[2 * i], b = order[2 * i + 1];
    if (labels[a] != labels[b]) continue;
    first.push_back(a);
    second.push_back(b);
  }
  out.x1 = x(first, Eigen::all);
  out.x2 = x(second, Eigen::all);
  for (std::size_t i = 0; i < first.size(); ++i) {
    out.y1.push_back(labels[first[i]]);
    out.y2.push_back(labels[second[i]]);
  }
  return out;
}

PairedBatch pair_inter(const Matrix& x, std::span<const int> labels, Rng& rng) {
  if (labels.size() < 2) throw std::invalid_argument("pair_inter: batch size must be >= 2");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw std::invalid_argument("pair_inter: size mismatch");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  PairedBatch out;
  out.pair_count = labels.size() / 2;
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < out.pair_count; ++i) {
    const std::size_t a = order[2 * i], b = order[2 * i + 1];
    if (labels[a] == labels[b]) continue;
    first.push_back(a);
    second.push_back(b);
  }
  out.x1 = x(first, Eigen::all);
  out.x2 = x(second, Eigen::all);
  for (std::size_t i = 0; i < first.size(); ++i) {
    out.y1.push_back(labels[first[i]]);
    out.y2.push_back(labels[second[i]]);
  }
  return out;
}

Matrix interpolate(const Matrix& x1, const Matrix& x2, double alpha) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) throw std::invalid_argument("interpolate: shape mismatch");
  if (!(alpha >= 0.0 && alpha <= 0.5)) throw std::invalid_argument("interpolate: alpha must lie in [0, 0.5]");
  return (1.0 - alpha) * x1 + alpha * x2;
}

std::vector<double> rotate(std::span<const double> image, const Shape& shape, double degrees) {
  check_image(image, shape, "rotate");
  std::vector<double> out(image.begin(), image.end());
  if (degrees == 0.0) return out;
  const int channels = shape.channels(), h = shape.height(), w = shape.width();
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  auto pixel = [&](int c, int r, int col) {
    if (r < 0 || r >= h || col < 0 || col >= w) return 0.0;
    return image[(static_cast<std::size_t>(c) * h + r) * w + col];
  };
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      // y axis points up so positive angles turn counter-clockwise on screen;
      // the source is found by rotating the output coordinate by -theta
      const double x = col - cx, y = cy - r;
      const double sx = cs * x + sn * y;
      const double sy = -sn * x + cs * y;
      const double src_c = sx + cx, src_r = cy - sy;
      const int c0 = static_cast<int>(std::floor(src_c)), r0 = static_cast<int>(std::floor(src_r));
      const double fc = src_c - c0, fr = src_r - r0;
      for (int c = 0; c < channels; ++c) {
        const double v = (1 - fr) * ((1 - fc) * pixel(c, r0, c0) + fc * pixel(c, r0, c0 + 1)) +
                         fr * ((1 - fc) * pixel(c, r0 + 1, c0) + fc * pixel(c, r0 + 1, c0 + 1));
        out[(static_cast<std::size_t>(c) * h + r) * w + col] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<double> translate(std::span<const double> image, const Shape& shape, double fraction, bool horizontal) {
  check_image(image, shape, "translate");
  if (!(std::abs(fraction) <= 0.5)) throw std::invalid_argument("translate: |fraction| must be <= 0.5");
  const int channels = shape.channels(), h = shape.height(), w = shape.width();
  const int shift = static_cast<int>(std::lround(fraction * (horizontal ? w : h)));
  std::vector<double> out(image.size(), 0.0);
  for (int c = 0; c < channels; ++c) {
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) {
        const int sr = horizontal ? r : r - shift;
        const int sc = horizontal ? col - shift : col;
        if (sr < 0 || sr >= h || sc < 0 || sc >= w) continue;
        out[(static_cast<std::size_t>(c) * h + r) * w + col] = image[(static_cast<std::size_t>(c) * h + sr) * w + sc];
      }
    }
  }
  return out;
}

namespace {

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// Hexcone hue rotation that keeps chroma (max - min) and the minimum fixed.
void rotate_hue(double& r, double& g, double& b, double turns) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double chroma = mx - mn;
  if (chroma <= 0.0) return;
  double hue;  // in sextants, [0, 6)
  if (mx == r) {
    hue = std::fmod((g - b) / chroma, 6.0);
  } else if (mx == g) {
    hue = (b - r) / chroma + 2.0;
  } else {
    hue = (r - g) / chroma + 4.0;
  }
  hue = std::fmod(hue + 6.0 * turns, 6.0);
  if (hue < 0.0) hue += 6.0;
  const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
  double rr = 0, gg = 0, bb = 0;
  switch (static_cast<int>(hue)) {
    case 0: rr = chroma; gg = x; break;
    case 1: rr = x; gg = chroma; break;
    case 2: gg = chroma; bb = x; break;
    case 3: gg = x; bb = chroma; break;
    case 4: rr = x; bb = chroma; break;
    default: rr = chroma; bb = x; break;
  }
  r = rr + mn;
  g = gg + mn;
  b = bb + mn;
}

}  // namespace

std::vector<double> color_jitter(std::span<const double> image, const Shape& shape, double amount,
                                 JitterStages stages) {
  check_image(image, shape, "color_jitter");
  if (shape.channels() != 3) throw std::invalid_argument("color_jitter: expects 3 channels, got " + std::to_string(shape.channels()));
  if (!(std::abs(amount) <= 0.25)) throw std::invalid_argument("color_jitter: |amount| must be <= 0.25");
  std::vector<double> out(image.begin(), image.end());
  if (amount == 0.0) return out;
  const std::size_t plane = static_cast<std::size_t>(shape.height()) * shape.width();
  double* red = out.data();
  double* green = red + plane;
  double* blue = green + plane;
  const double gain = 1.0 + amount;
  if (stages.brightness) {
    for (double& v : out) v *= gain;
  }
  if (stages.contrast) {
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += luminance(red[p], green[p], blue[p]);
    mean /= static_cast<double>(plane);
    for (double& v : out) v = v * gain - mean * amount;
  }
  if (stages.saturation) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double gray = luminance(red[p], green[p], blue[p]);
      red[p] = red[p] * gain - gray * amount;
      green[p] = green[p] * gain - gray * amount;
      blue[p] = blue[p] * gain - gray * amount;
    }
  }
  if (stages.hue) {
    for (std::size_t p = 0; p < plane; ++p) rotate_hue(red[p], green[p], blue[p], amount);
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Matrix gaussian_noise(const Matrix& x, double alpha, Rng& rng) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("gaussian_noise: alpha must be >= 0");
  Matrix out = x;
  if (alpha == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += alpha * normal(rng);
  return out;
}

namespace {

void perturb_row(Eigen::Ref<Eigen::RowVectorXd> row, const Shape& shape, PerturbationKind kind, double alpha,
                 Rng& rng) {
  const std::span<const double> view(row.data(), static_cast<std::size_t>(row.size()));
  std::vector<double> result;
  switch (kind) {
    case PerturbationKind::rotate:
      result = rotate(view, shape, alpha);
      break;
    case PerturbationKind::translate_h:
      result = translate(view, shape, alpha, true);
      break;
    case PerturbationKind::translate_v:
      result = translate(view, shape, alpha, false);
      break;
    case PerturbationKind::color_jitter:
      result = color_jitter(view, shape, alpha);
      break;
    case PerturbationKind::gaussian_noise: {
      if (!(alpha >= 0.0)) throw std::invalid_argument("gaussian_noise: alpha must be >= 0");
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < row.size(); ++i) row[i] += alpha * normal(rng);
      return;
    }
    default:
      throw std::invalid_argument(to_string(kind) + " needs paired samples, not a per-sample application");
  }
  std::copy(result.begin(), result.end(), row.data());
}

}  // namespace

void perturb_rows(Matrix& batch, const Shape& shape, PerturbationKind kind, double alpha, Rng& rng) {
  if (batch.cols() != shape.size()) throw std::invalid_argument("perturb_rows: batch width does not match shape");
  for (Eigen::Index r = 0; r < batch.rows(); ++r) perturb_row(batch.row(r), shape, kind, alpha, rng);
}

void perturb_rows(Matrix& batch, const Shape& shape, PerturbationKind kind, std::span<const double> alphas, Rng& rng) {
  if (batch.cols() != shape.size()) throw std::invalid_argument("perturb_rows: batch width does not match shape");
  if (alphas.size() != static_cast<std::size_t>(batch.rows())) throw std::invalid_argument("perturb_rows: one magnitude per row required");
  for (Eigen::Index r = 0; r < batch.rows(); ++r) perturb_row(batch.row(r), shape, kind, alphas[r], rng);
}

}  // namespace prgauge
