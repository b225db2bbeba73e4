#include "prgauge/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "conv_ops.hpp"

namespace prgauge {

int Shape::size() const {
  int n = 1;
  for (int d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

std::string Shape::str() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  return out.str();
}

bool is_parameterized(const Layer& layer) {
  return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2dLayer>(layer);
}

std::string layer_type_name(const Layer& layer) {
  struct Visitor {
    std::string operator()(const DenseLayer&) const { return "dense"; }
    std::string operator()(const Conv2dLayer&) const { return "conv2d"; }
    std::string operator()(const ReluLayer&) const { return "relu"; }
    std::string operator()(const FlattenLayer&) const { return "flatten"; }
    std::string operator()(const SoftmaxLayer&) const { return "softmax"; }
  };
  return std::visit(Visitor{}, layer);
}

namespace {

Shape output_shape(const Layer& layer, const Shape& in, std::size_t index) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("layer " + std::to_string(index) + " (" + layer_type_name(layer) +
                                "): " + what + " (input " + in.str() + ")");
  };
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
    if (in.is_image()) fail("dense layer expects a flat input; insert flatten first");
    if (dense->weight.cols() != in.size()) {
      fail("weight expects " + std::to_string(dense->weight.cols()) + " inputs");
    }
    if (dense->bias.size() != dense->weight.rows()) fail("bias length does not match output width");
    return Shape{{static_cast<int>(dense->weight.rows())}};
  }
  if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
    if (!in.is_image()) fail("conv2d expects a C x H x W input");
    if (conv->in_channels != in.channels()) fail("channel count mismatch");
    if (conv->kernel < 1 || conv->stride < 1) fail("kernel and stride must be positive");
    if (conv->kernel > in.height() || conv->kernel > in.width()) fail("kernel larger than input");
    if (conv->weight.rows() != conv->out_channels ||
        conv->weight.cols() != conv->in_channels * conv->kernel * conv->kernel ||
        conv->bias.size() != conv->out_channels) {
      fail("weight dimensions inconsistent with channels/kernel");
    }
    return Shape{{conv->out_channels, detail::conv_out_extent(in.height(), conv->kernel, conv->stride),
                  detail::conv_out_extent(in.width(), conv->kernel, conv->stride)}};
  }
  if (std::holds_alternative<FlattenLayer>(layer)) return Shape{{in.size()}};
  return in;  // relu, softmax
}

}  // namespace

Network::Network(Shape input, int num_classes, std::vector<Layer> layers)
    : input_shape_(std::move(input)), num_classes_(num_classes), layers_(std::move(layers)) {
  if (num_classes_ < 1) throw std::invalid_argument("num_classes must be positive");
  if (input_shape_.dims.empty() || input_shape_.size() <= 0) {
    throw std::invalid_argument("input dims must be positive");
  }
  if (layers_.empty() || !std::holds_alternative<SoftmaxLayer>(layers_.back())) {
    throw std::invalid_argument("network must end with a softmax layer");
  }
  raw_shapes_.push_back(input_shape_);
  bool stage_open = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    if (std::holds_alternative<SoftmaxLayer>(layer) && i + 1 != layers_.size()) {
      throw std::invalid_argument("softmax is only allowed as the final layer");
    }
    raw_shapes_.push_back(output_shape(layer, raw_shapes_.back(), i));
    const bool passive = std::holds_alternative<ReluLayer>(layer) || std::holds_alternative<FlattenLayer>(layer);
    if (passive && stage_open) {
      stage_end_.back() = i + 1;
    } else if (passive) {
      // leading reshape/activation folds into the first real stage
    } else {
      stage_end_.push_back(i + 1);
      stage_open = !std::holds_alternative<SoftmaxLayer>(layer);
    }
  }
  if (raw_shapes_.back().is_image() || raw_shapes_.back().size() != num_classes_) {
    throw std::invalid_argument("network output has " + raw_shapes_.back().str() + " entries, expected " +
                                std::to_string(num_classes_) + " classes");
  }
}

const Shape& Network::layer_shape(int layer) const {
  if (layer < 0 || layer > num_layers()) throw std::out_of_range("layer index out of range");
  return layer == 0 ? input_shape_ : raw_shapes_[stage_end_[layer - 1]];
}

std::pair<std::size_t, std::size_t> Network::raw_range(int from, int to) const {
  if (from < 0 || to > num_layers() || from > to) {
    throw std::out_of_range("layer range (" + std::to_string(from) + ", " + std::to_string(to) +
                            "] outside 0.." + std::to_string(num_layers()));
  }
  const std::size_t begin = from == 0 ? 0 : stage_end_[from - 1];
  const std::size_t end = to == 0 ? 0 : stage_end_[to - 1];
  return {begin, end};
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) n += d->weight.size() + d->bias.size();
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) n += c->weight.size() + c->bias.size();
  }
  return n;
}

bool Network::all_finite() const {
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      if (!d->weight.allFinite() || !d->bias.allFinite()) return false;
    }
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      if (!c->weight.allFinite() || !c->bias.allFinite()) return false;
    }
  }
  return true;
}

void Network::round_to_float() {
  auto round = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      round(d->weight);
      round(d->bias);
    }
    if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      round(c->weight);
      round(c->bias);
    }
  }
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix apply_layer(const Layer& layer, const Shape& in_shape, const Matrix& x) {
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
    Matrix z = x * dense->weight.transpose();
    z.rowwise() += dense->bias.transpose();
    return z;
  }
  if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
    const int oh = detail::conv_out_extent(in_shape.height(), conv->kernel, conv->stride);
    const int ow = detail::conv_out_extent(in_shape.width(), conv->kernel, conv->stride);
    Matrix z(x.rows(), conv->out_channels * oh * ow);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Eigen::MatrixXd cols = detail::im2col(x.row(r).data(), in_shape, conv->kernel, conv->stride);
      Eigen::MatrixXd out = conv->weight * cols;
      out.colwise() += conv->bias;
      // out is (channels x positions) column-major; copy channel-major into the row
      for (int c = 0; c < conv->out_channels; ++c) {
        for (int p = 0; p < oh * ow; ++p) z(r, c * oh * ow + p) = out(c, p);
      }
    }
    return z;
  }
  if (std::holds_alternative<ReluLayer>(layer)) return x.cwiseMax(0.0);
  if (std::holds_alternative<SoftmaxLayer>(layer)) return softmax(x);
  return x;  // flatten: storage is already flat
}

namespace {

Matrix run_raw(const Network& net, std::size_t begin, std::size_t end, Matrix x) {
  const auto layers = net.raw_layers();
  for (std::size_t i = begin; i < end; ++i) x = apply_layer(layers[i], net.raw_input_shape(i), x);
  return x;
}

void check_width(const Matrix& x, const Shape& expected, const char* what) {
  if (x.cols() != expected.size()) {
    throw std::invalid_argument(std::string(what) + ": representation has " + std::to_string(x.cols()) +
                                " features, layer expects " + std::to_string(expected.size()) + " (" +
                                expected.str() + ")");
  }
}

}  // namespace

Matrix forward_tap(const Network& net, const Matrix& x, int layer) {
  if (layer < 0 || layer > net.num_layers()) {
    throw std::out_of_range("forward_tap: layer " + std::to_string(layer) + " outside 0.." +
                            std::to_string(net.num_layers()));
  }
  check_width(x, net.input_shape(), "forward_tap");
  const auto [begin, end] = net.raw_range(0, layer);
  return run_raw(net, begin, end, x);
}

Matrix forward_from(const Network& net, int layer, const Matrix& hidden) {
  if (layer < 0 || layer > net.num_layers()) {
    throw std::out_of_range("forward_from: layer " + std::to_string(layer) + " outside 0.." +
                            std::to_string(net.num_layers()));
  }
  check_width(hidden, net.layer_shape(layer), "forward_from");
  const auto [begin, end] = net.raw_range(layer, net.num_layers());
  return run_raw(net, begin, end, hidden);
}

Matrix forward(const Network& net, const Matrix& x) { return forward_from(net, 0, x); }

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> predict(const Network& net, const Matrix& x) {
  const Matrix probs = forward(net, x);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) out[r] = argmax(probs.row(r));
  return out;
}

std::size_t count_correct(const Matrix& probabilities, std::span<const int> labels) {
  if (static_cast<std::size_t>(probabilities.rows()) != labels.size()) {
    throw std::invalid_argument("count_correct: prediction/label count mismatch");
  }
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    if (argmax(probabilities.row(r)) == labels[r]) ++correct;
  }
  return correct;
}

double accuracy(const Network& net, const Matrix& x, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: empty dataset");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw std::invalid_argument("accuracy: input/label count mismatch");
  }
  for (int y : labels) {
    if (y < 0 || y >= net.num_classes()) throw std::invalid_argument("accuracy: label outside [k]");
  }
  // chunked so large evaluation sets do not materialize every activation at once
  constexpr Eigen::Index kChunk = 512;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, x.rows() - start);
    correct += count_correct(forward(net, x.middleRows(start, len)), labels.subspan(start, len));
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void initialize_uniform(Network& net, Rng& rng) {
  for (auto& layer : net.mutable_raw_layers()) {
    auto fill = [&](Eigen::MatrixXd& w, Eigen::VectorXd& b, double fan_in) {
      std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
      }
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
    };
    if (auto* d = std::get_if<DenseLayer>(&layer)) fill(d->weight, d->bias, static_cast<double>(d->weight.cols()));
    if (auto* c = std::get_if<Conv2dLayer>(&layer)) fill(c->weight, c->bias, static_cast<double>(c->weight.cols()));
  }
}

namespace {

DenseLayer dense(int in, int out) { return DenseLayer{Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)}; }

}  // namespace

Network make_mlp(const Shape& input, std::span<const int> hidden, int num_classes, std::uint64_t seed) {
  std::vector<Layer> layers;
  int width = input.size();
  if (input.is_image()) layers.emplace_back(FlattenLayer{});
  for (int h : hidden) {
    layers.emplace_back(dense(width, h));
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(dense(width, num_classes));
  layers.emplace_back(SoftmaxLayer{});
  Network net(input, num_classes, std::move(layers));
  Rng rng(seed);
  initialize_uniform(net, rng);
  return net;
}

Network make_convnet(const Shape& input, std::span<const ConvSpec> convs, std::span<const int> hidden,
                     int num_classes, std::uint64_t seed) {
  if (!input.is_image()) throw std::invalid_argument("make_convnet: input must be C x H x W");
  std::vector<Layer> layers;
  Shape shape = input;
  for (const auto& spec : convs) {
    const int in_c = shape.channels();
    layers.emplace_back(Conv2dLayer{in_c, spec.out_channels, spec.kernel, spec.stride,
                                    Eigen::MatrixXd::Zero(spec.out_channels, in_c * spec.kernel * spec.kernel),
                                    Eigen::VectorXd::Zero(spec.out_channels)});
    layers.emplace_back(ReluLayer{});
    shape = Shape{{spec.out_channels, detail::conv_out_extent(shape.height(), spec.kernel, spec.stride),
                   detail::conv_out_extent(shape.width(), spec.kernel, spec.stride)}};
  }
  layers.emplace_back(FlattenLayer{});
  int width = shape.size();
  for (int h : hidden) {
    layers.emplace_back(dense(width, h));
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(dense(width, num_classes));
  layers.emplace_back(SoftmaxLayer{});
  Network net(input, num_classes, std::move(layers));
  Rng rng(seed);
  initialize_uniform(net, rng);
  return net;
}

}  // namespace prgauge
