#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prgauge/nn.hpp"

namespace prgauge {

enum class Optimizer { sgd, adam };

std::string to_string(Optimizer opt);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  /// Fraction of training points relabelled to a different random class.
  double label_noise_fraction = 0.0;
  double weight_decay = 0.0;

  void validate() const;
};

/// Thrown when the loss turns non-finite during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  /// Applied to every mini-batch copy before the forward pass.
  std::function<void(Matrix& batch, Rng& rng)> augment;
  const Matrix* validation_inputs = nullptr;
  std::span<const int> validation_labels;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> validation_accuracy;
};

struct TrainResult {
  Network network;
  std::vector<EpochLog> log;
  /// Accuracy on the (possibly noise-relabelled) training labels, un-augmented.
  double train_accuracy = 0.0;
  /// Labels the network was trained against.
  std::vector<int> labels;
};

/// Relabels round(fraction * n) randomly chosen points to a uniformly drawn different class.
std::vector<int> apply_label_noise(std::span<const int> labels, int num_classes, double fraction, Rng& rng);
/// The labels train() fits for this config: the noise draw is seeded from cfg.seed alone.
std::vector<int> training_labels(std::span<const int> labels, int num_classes, const TrainConfig& cfg);

/// Mini-batch cross-entropy training; deterministic given cfg.seed.
TrainResult train(const Network& net, const Matrix& inputs, std::span<const int> labels, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Per-layer parameter gradients; entries for parameterless layers are empty.
struct ParamGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};
using Gradients = std::vector<ParamGrad>;

/// Mean cross-entropy plus 0.5 * weight_decay * sum(W^2) over weight matrices.
/// Fills `grads` by backpropagation when non-null.
double loss_and_gradients(const Network& net, const Matrix& x, std::span<const int> labels, double weight_decay,
                          Gradients* grads);

/// Parameters in layer order, weight (column-major) then bias, for each parameterized layer.
std::vector<double> flatten_parameters(const Network& net);
void assign_parameters(Network& net, std::span<const double> flat);
std::vector<double> flatten_gradients(const Network& net, const Gradients& grads);

}  // namespace prgauge
