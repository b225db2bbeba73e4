#include "prgauge/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "prgauge/io.hpp"

namespace prgauge {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    default: return "all";
  }
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) throw std::invalid_argument("dataset: |inputs| != |labels|");
  if (inputs.cols() != shape.size()) throw std::invalid_argument("dataset: sample width does not match shape");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label outside [k]");
  }
  if (shape.is_image() && inputs.size() > 0 && (inputs.minCoeff() < 0.0 || inputs.maxCoeff() > 1.0)) {
    throw std::invalid_argument("dataset: image values outside [0, 1]");
  }
}

namespace {

std::vector<int> balanced_labels(int num_classes, int n, Rng& rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[i] = i % num_classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

void round_to_float(Matrix& m) { m = m.cast<float>().cast<double>(); }

}  // namespace

Dataset gen_blobs(int num_classes, int n, int dims, double spread, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("gen_blobs: need k >= 2");
  if (n < num_classes) throw std::invalid_argument("gen_blobs: need n >= k");
  if (dims < 1) throw std::invalid_argument("gen_blobs: need dims >= 1");
  if (!(spread >= 0.0)) throw std::invalid_argument("gen_blobs: spread must be >= 0");
  Rng rng = make_rng(seed, {0x626c6f62ULL});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(num_classes, dims);
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < dims; ++j) centers(c, j) = normal(rng);
  }
  Dataset out;
  out.labels = balanced_labels(num_classes, n, rng);
  out.inputs.resize(n, dims);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dims; ++j) out.inputs(i, j) = centers(out.labels[i], j) + spread * normal(rng);
  }
  round_to_float(out.inputs);
  out.shape = Shape{{dims}};
  out.num_classes = num_classes;
  out.seed = seed;
  return out;
}

std::string to_string(Glyph glyph) {
  static constexpr const char* kNames[] = {"disk", "ring", "plus", "bar", "square", "triangle", "cross", "corner"};
  return kNames[static_cast<int>(glyph)];
}

std::vector<double> render_glyph_mask(Glyph glyph, int size, double cx, double cy, double radius) {
  std::vector<double> mask(static_cast<std::size_t>(size) * size, 0.0);
  const double stroke = std::max(1.5, 0.3 * radius);
  const double half = 0.5 * stroke;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dx = c - cx, dy = r - cy;
      const double dist = std::hypot(dx, dy);
      const double cheb = std::max(std::abs(dx), std::abs(dy));
      bool on = false;
      switch (glyph) {
        case Glyph::disk:
          on = dist <= radius;
          break;
        case Glyph::ring:
          on = dist <= radius && dist >= radius - stroke;
          break;
        case Glyph::plus:
          on = (std::abs(dx) <= half && std::abs(dy) <= radius) || (std::abs(dy) <= half && std::abs(dx) <= radius);
          break;
        case Glyph::bar:
          on = std::abs(dy) <= half && std::abs(dx) <= radius;
          break;
        case Glyph::square:
          on = cheb <= radius && cheb >= radius - stroke;
          break;
        case Glyph::triangle: {
          // apex up, base at dy = radius / 2
          const double depth = dy + radius;  // 0 at apex
          on = dy <= 0.5 * radius && depth >= 0.0 && std::abs(dx) <= depth / std::sqrt(3.0);
          break;
        }
        case Glyph::cross:
          on = (std::abs(dx - dy) <= half * std::sqrt(2.0) || std::abs(dx + dy) <= half * std::sqrt(2.0)) &&
               cheb <= radius / std::sqrt(2.0);
          break;
        case Glyph::corner:
          on = (std::abs(dx + 0.5 * radius) <= half && std::abs(dy) <= radius) ||
               (std::abs(dy - radius + half) <= half && std::abs(dx) <= radius * 0.8);
          break;
      }
      if (on) mask[static_cast<std::size_t>(r) * size + c] = 1.0;
    }
  }
  return mask;
}

Dataset gen_glyphs(int num_classes, int n, int size, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("gen_glyphs: empty dataset requested");
  if (size < 8) throw std::invalid_argument("gen_glyphs: size must be >= 8");
  if (num_classes < 2 || num_classes > kGlyphCount) {
    throw std::invalid_argument("gen_glyphs: k must lie in [2, " + std::to_string(kGlyphCount) + "]");
  }
  Rng rng = make_rng(seed, {0x676c797068ULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset out;
  out.labels = balanced_labels(num_classes, n, rng);
  out.shape = Shape{{3, size, size}};
  out.inputs.resize(n, out.shape.size());
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int i = 0; i < n; ++i) {
    const double centre = 0.5 * (size - 1);
    const double jitter = size / 8.0;
    const double cx = centre + jitter * (2.0 * unit(rng) - 1.0);
    const double cy = centre + jitter * (2.0 * unit(rng) - 1.0);
    const double radius = size * (0.25 + 0.1 * unit(rng));
    const auto mask = render_glyph_mask(static_cast<Glyph>(out.labels[i]), size, cx, cy, radius);
    double fg[3], bg[3];
    for (int c = 0; c < 3; ++c) {
      fg[c] = 0.6 + 0.4 * unit(rng);
      bg[c] = 0.25 * unit(rng);
    }
    for (int c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        out.inputs(i, static_cast<Eigen::Index>(c * plane + p)) = mask[p] > 0.0 ? fg[c] : bg[c];
      }
    }
  }
  round_to_float(out.inputs);
  out.num_classes = num_classes;
  out.seed = seed;
  return out;
}

Dataset take_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.shape = data.shape;
  out.num_classes = data.num_classes;
  out.split = data.split;
  out.seed = data.seed;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) throw std::out_of_range("take_rows: row index out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

TrainTestSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
  Rng rng = make_rng(seed, {0x73706c6974ULL});
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  TrainTestSplit out{take_rows(data, train_rows), take_rows(data, test_rows)};
  out.train.split = Split::train;
  out.test.split = Split::test;
  return out;
}

std::string to_string(AugmentLevel level) {
  switch (level) {
    case AugmentLevel::none: return "none";
    case AugmentLevel::partial: return "partial";
    default: return "full";
  }
}

AugmentLevel augment_level_from_string(const std::string& name) {
  if (name == "none") return AugmentLevel::none;
  if (name == "partial") return AugmentLevel::partial;
  if (name == "full") return AugmentLevel::full;
  throw std::invalid_argument("unknown augmentation level '" + name + "'");
}

std::pair<double, double> AugmentRegime::magnitude_range() const {
  const double id = perturbation.identity_magnitude();
  switch (level) {
    case AugmentLevel::none: return {id, id};
    case AugmentLevel::partial:
      return {id + 0.5 * (perturbation.alpha_min - id), id + 0.5 * (perturbation.alpha_max - id)};
    default: return {perturbation.alpha_min, perturbation.alpha_max};
  }
}

void augment(Matrix& batch, const Shape& shape, const AugmentRegime& regime, Rng& rng) {
  if (regime.level == AugmentLevel::none) return;
  const PerturbationSpec& spec = regime.perturbation;
  if (spec.is_mixup()) throw std::invalid_argument("augment: interpolation perturbations cannot augment single samples");
  if (spec.requires_image() && !shape.is_image()) {
    throw std::invalid_argument("augment: " + to_string(spec.kind) + " needs image data, batch shape is " + shape.str());
  }
  const auto [lo, hi] = regime.magnitude_range();
  std::uniform_real_distribution<double> draw(lo, hi);
  std::vector<double> alphas(static_cast<std::size_t>(batch.rows()));
  for (double& a : alphas) a = draw(rng);
  perturb_rows(batch, shape, spec.kind, alphas, rng);
}

namespace {

constexpr char kMagic[4] = {'P', 'R', 'G', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error(path.string() + ": truncated dataset file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.num_classes));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.shape.dims.size()));
  for (int d : data.shape.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<std::uint64_t>(out, data.size());
  for (Eigen::Index i = 0; i < data.inputs.size(); ++i) {
    put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(data.inputs.data()[i])));
  }
  for (int y : data.labels) put<std::uint16_t>(out, static_cast<std::uint16_t>(y));
  write_text_file(path, out);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string in = read_text_file(path);
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw std::runtime_error(path.string() + ": not a PRGD dataset");
  std::size_t pos = 4;
  if (get<std::uint32_t>(in, pos, path) != kDatasetVersion) throw std::runtime_error(path.string() + ": unsupported version");
  Dataset out;
  out.num_classes = static_cast<int>(get<std::uint32_t>(in, pos, path));
  const auto ndims = get<std::uint32_t>(in, pos, path);
  if (ndims != 1 && ndims != 3) throw std::runtime_error(path.string() + ": bad dims count");
  for (std::uint32_t i = 0; i < ndims; ++i) out.shape.dims.push_back(static_cast<int>(get<std::uint32_t>(in, pos, path)));
  const auto count = get<std::uint64_t>(in, pos, path);
  out.inputs.resize(static_cast<Eigen::Index>(count), out.shape.size());
  for (Eigen::Index i = 0; i < out.inputs.size(); ++i) {
    out.inputs.data()[i] = static_cast<double>(std::bit_cast<float>(get<std::uint32_t>(in, pos, path)));
  }
  out.labels.resize(count);
  for (auto& y : out.labels) y = get<std::uint16_t>(in, pos, path);
  if (pos != in.size()) throw std::runtime_error(path.string() + ": trailing bytes");
  out.validate();
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  if (data.shape.is_image()) throw std::invalid_argument("CSV export is only defined for vector datasets");
  std::ostringstream out;
  for (int j = 0; j < data.shape.size(); ++j) out << 'x' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.shape.size(); ++j) out << format_double(data.inputs(static_cast<Eigen::Index>(i), j)) << ',';
    out << data.labels[i] << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace prgauge
