#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "prgauge/random.hpp"

namespace prgauge {

/// Batches are row-major: one sample per row, features flattened channel-major (C, H, W).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dimensions of one sample: {d} for vectors, {C, H, W} for images.
struct Shape {
  std::vector<int> dims;

  int size() const;
  bool is_image() const { return dims.size() == 3; }
  int channels() const { return is_image() ? dims[0] : 1; }
  int height() const { return is_image() ? dims[1] : 1; }
  int width() const { return is_image() ? dims[2] : 1; }
  std::string str() const;

  bool operator==(const Shape&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Valid (unpadded) 2-D convolution. Weight rows are output channels, columns
/// walk (in_channel, ky, kx).
struct Conv2dLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct ReluLayer {};
struct FlattenLayer {};
struct SoftmaxLayer {};

using Layer = std::variant<DenseLayer, Conv2dLayer, ReluLayer, FlattenLayer, SoftmaxLayer>;

bool is_parameterized(const Layer& layer);
std::string layer_type_name(const Layer& layer);

/// Layered classifier f: R^d -> simplex_k.
///
/// Tap points are counted in stages: a stage is a parameterized layer together
/// with the relu/flatten layers that immediately follow it; the softmax output
/// is its own final stage. Stage 0 is the input, so x^(1) is the activation of
/// the first parameterized layer and x^(num_layers()) is the class distribution.
class Network {
 public:
  Network() = default;
  Network(Shape input, int num_classes, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }

  /// Number of tap stages (the softmax stage included).
  int num_layers() const { return static_cast<int>(stage_end_.size()); }
  /// Shape of x^(layer); layer 0 is the input shape.
  const Shape& layer_shape(int layer) const;

  std::span<const Layer> raw_layers() const { return layers_; }
  /// Mutable access for optimizers. Changing parameter dimensions is not allowed.
  std::span<Layer> mutable_raw_layers() { return layers_; }
  const Shape& raw_input_shape(std::size_t raw_index) const { return raw_shapes_[raw_index]; }

  /// Raw layer range [begin, end) spanned by stages (from, to].
  std::pair<std::size_t, std::size_t> raw_range(int from, int to) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Rounds every weight to float32 precision (the on-disk representation).
  void round_to_float();

 private:
  Shape input_shape_;
  int num_classes_ = 0;
  std::vector<Layer> layers_;
  std::vector<Shape> raw_shapes_;      // raw_shapes_[i] is the input shape of layer i; back() is output
  std::vector<std::size_t> stage_end_;  // raw end index of stage s+1
};

/// Applies a single raw layer to a batch.
Matrix apply_layer(const Layer& layer, const Shape& in_shape, const Matrix& x);

/// x^(layer): the representation after `layer` stages. Layer 0 returns x.
Matrix forward_tap(const Network& net, const Matrix& x, int layer);
/// f_layer: resumes the network from representation x^(layer).
Matrix forward_from(const Network& net, int layer, const Matrix& hidden);
Matrix forward(const Network& net, const Matrix& x);

/// Argmax with ties resolved toward the lowest class index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);
std::vector<int> predict(const Network& net, const Matrix& x);
std::size_t count_correct(const Matrix& probabilities, std::span<const int> labels);
double accuracy(const Network& net, const Matrix& x, std::span<const int> labels);

Matrix softmax(const Matrix& logits);

struct ConvSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 1;
};

/// dense(+relu) x hidden.size() -> dense -> softmax, weights drawn uniform in
/// +-1/sqrt(fan_in).
Network make_mlp(const Shape& input, std::span<const int> hidden, int num_classes, std::uint64_t seed);
/// conv(+relu)... -> flatten -> dense(+relu)... -> dense -> softmax.
Network make_convnet(const Shape& input, std::span<const ConvSpec> convs, std::span<const int> hidden,
                     int num_classes, std::uint64_t seed);
void initialize_uniform(Network& net, Rng& rng);

}  // namespace prgauge
