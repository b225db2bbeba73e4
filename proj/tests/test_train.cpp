#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "prgauge/data.hpp"
#include "prgauge/train.hpp"

using namespace prgauge;

namespace {

// Central differences against backprop over every parameter.
double worst_relative_gradient_error(const Network& net, const Matrix& x, std::span<const int> y, double wd) {
  Gradients g;
  loss_and_gradients(net, x, y, wd, &g);
  const std::vector<double> analytic = flatten_gradients(net, g);
  std::vector<double> flat = flatten_parameters(net);
  Network probe = net;
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    assign_parameters(probe, flat);
    const double up = loss_and_gradients(probe, x, y, wd, nullptr);
    flat[i] = keep - h;
    assign_parameters(probe, flat);
    const double down = loss_and_gradients(probe, x, y, wd, nullptr);
    flat[i] = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic[i]) / std::max(1e-4, std::abs(numeric) + std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace

TEST(Gradients, MlpMatchesFiniteDifferences) {
  const Dataset d = gen_blobs(3, 12, 5, 1.0, 1);
  const std::vector<int> hidden = {6, 4};
  EXPECT_LT(worst_relative_gradient_error(make_mlp(d.shape, hidden, 3, 2), d.inputs, d.labels, 0.0), 1e-5);
  EXPECT_LT(worst_relative_gradient_error(make_mlp(d.shape, hidden, 3, 3), d.inputs, d.labels, 0.1), 1e-5);
}

TEST(Gradients, ConvnetMatchesFiniteDifferences) {
  const Dataset d = gen_glyphs(4, 6, 8, 4);
  const std::vector<ConvSpec> convs = {{3, 3, 2}};
  const std::vector<int> hidden = {5};
  EXPECT_LT(worst_relative_gradient_error(make_convnet(d.shape, convs, hidden, 4, 5), d.inputs, d.labels, 0.01), 1e-5);
}

TEST(LabelNoise, RelabelsExactCountToOtherClasses) {
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  for (double f : {0.0, 0.1, 0.25, 0.5, 1.0}) {
    Rng rng(9);
    const auto noisy = apply_label_noise(labels, 4, f, rng);
    int changed = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      changed += noisy[i] != labels[i];
      EXPECT_GE(noisy[i], 0);
      EXPECT_LT(noisy[i], 4);
    }
    EXPECT_EQ(changed, static_cast<int>(std::lround(f * 200)));
  }
}

TEST(Train, ZeroEpochsLeavesNetworkUntouched) {
  const Dataset d = gen_blobs(3, 30, 4, 1.0, 1);
  const Network net = make_mlp(d.shape, std::vector<int>{5}, 3, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(net, d.inputs, d.labels, cfg);
  EXPECT_EQ(flatten_parameters(r.network), flatten_parameters(net));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, DeterministicAndLearnsSeparableData) {
  const Dataset d = gen_blobs(3, 150, 8, 0.3, 3);
  const Network net = make_mlp(d.shape, std::vector<int>{16}, 3, 4);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.01;
  cfg.seed = 12;
  const TrainResult a = train(net, d.inputs, d.labels, cfg);
  const TrainResult b = train(net, d.inputs, d.labels, cfg);
  EXPECT_EQ(flatten_parameters(a.network), flatten_parameters(b.network));
  EXPECT_GT(a.train_accuracy, 0.95);
  EXPECT_LT(a.log.back().mean_loss, a.log.front().mean_loss);
}

TEST(Train, NoisyLabelsAreTheFittedTargets) {
  const Dataset d = gen_blobs(4, 100, 4, 1.0, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.label_noise_fraction = 0.3;
  cfg.seed = 5;
  const TrainResult r = train(make_mlp(d.shape, std::vector<int>{4}, 4, 1), d.inputs, d.labels, cfg);
  EXPECT_EQ(r.labels, training_labels(d.labels, 4, cfg));
  EXPECT_NE(r.labels, d.labels);
}

TEST(Train, HugeStepDiverges) {
  const Dataset d = gen_blobs(3, 60, 4, 1.0, 1);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::sgd;
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  EXPECT_THROW(train(make_mlp(d.shape, std::vector<int>{8}, 3, 2), d.inputs, d.labels, cfg), TrainingDiverged);
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.label_noise_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(optimizer_from_string("rmsprop"), std::invalid_argument);
}
