#include "prgauge/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "conv_ops.hpp"

namespace prgauge {

std::string to_string(Optimizer opt) { return opt == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be > 0");
  }
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(label_noise_fraction >= 0.0 && label_noise_fraction <= 1.0)) {
    throw std::invalid_argument("label_noise_fraction must lie in [0, 1]");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
}

std::vector<int> apply_label_noise(std::span<const int> labels, int num_classes, double fraction, Rng& rng) {
  std::vector<int> out(labels.begin(), labels.end());
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
  if (flips == 0 || num_classes < 2) return out;
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<int> shift(1, num_classes - 1);
  for (std::size_t i = 0; i < flips; ++i) {
    auto& y = out[order[i]];
    y = (y + shift(rng)) % num_classes;
  }
  return out;
}

namespace {

void add_weight_decay(const Network& net, double weight_decay, Gradients& grads, double& loss) {
  if (weight_decay == 0.0) return;
  const auto layers = net.raw_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Eigen::MatrixXd* w = nullptr;
    if (const auto* d = std::get_if<DenseLayer>(&layers[i])) w = &d->weight;
    if (const auto* c = std::get_if<Conv2dLayer>(&layers[i])) w = &c->weight;
    if (!w) continue;
    loss += 0.5 * weight_decay * w->squaredNorm();
    if (grads[i].weight.size()) grads[i].weight += weight_decay * *w;
  }
}

}  // namespace

double loss_and_gradients(const Network& net, const Matrix& x, std::span<const int> labels, double weight_decay,
                          Gradients* grads) {
  if (x.rows() == 0) throw std::invalid_argument("loss_and_gradients: empty batch");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw std::invalid_argument("loss_and_gradients: input/label count mismatch");
  }
  const auto layers = net.raw_layers();
  const std::size_t n_layers = layers.size();
  std::vector<Matrix> acts;
  acts.reserve(n_layers);
  acts.push_back(x);
  // stop before softmax: the loss works from logits
  for (std::size_t i = 0; i + 1 < n_layers; ++i) acts.push_back(apply_layer(layers[i], net.raw_input_shape(i), acts[i]));

  const Matrix& logits = acts.back();
  const auto batch = static_cast<double>(x.rows());
  double loss = 0.0;
  Matrix delta(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - peak).exp();
    const double z = e.sum();
    loss += std::log(z) + peak - logits(r, labels[r]);
    delta.row(r) = e / z;
    delta(r, labels[r]) -= 1.0;
  }
  loss /= batch;
  delta /= batch;

  if (!grads) {
    Gradients none;
    if (weight_decay != 0.0) {
      none.resize(n_layers);
      add_weight_decay(net, weight_decay, none, loss);
    }
    return loss;
  }

  grads->assign(n_layers, ParamGrad{});
  for (std::size_t li = n_layers - 1; li-- > 0;) {
    const Layer& layer = layers[li];
    const Matrix& input = acts[li];
    const bool need_input_grad = li > 0;
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      (*grads)[li].weight = delta.transpose() * input;
      (*grads)[li].bias = delta.colwise().sum().transpose();
      if (need_input_grad) delta = delta * dense->weight;
    } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
      const Shape& in_shape = net.raw_input_shape(li);
      const int positions = static_cast<int>(delta.cols()) / conv->out_channels;
      Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(conv->weight.rows(), conv->weight.cols());
      Eigen::VectorXd db = Eigen::VectorXd::Zero(conv->out_channels);
      Matrix dx = need_input_grad ? Matrix::Zero(input.rows(), input.cols()) : Matrix();
      for (Eigen::Index r = 0; r < input.rows(); ++r) {
        const Eigen::MatrixXd cols = detail::im2col(input.row(r).data(), in_shape, conv->kernel, conv->stride);
        Eigen::MatrixXd dout(conv->out_channels, positions);
        for (int c = 0; c < conv->out_channels; ++c) {
          for (int p = 0; p < positions; ++p) dout(c, p) = delta(r, c * positions + p);
        }
        dw.noalias() += dout * cols.transpose();
        db += dout.rowwise().sum();
        if (need_input_grad) {
          const Eigen::MatrixXd dcols = conv->weight.transpose() * dout;
          detail::col2im(dcols, in_shape, conv->kernel, conv->stride, dx.row(r).data());
        }
      }
      (*grads)[li].weight = std::move(dw);
      (*grads)[li].bias = std::move(db);
      if (need_input_grad) delta = std::move(dx);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      delta = delta.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
    // flatten: gradient passes through unchanged
  }
  add_weight_decay(net, weight_decay, *grads, loss);
  return loss;
}

std::vector<double> flatten_parameters(const Network& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  auto push = [&](const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    flat.insert(flat.end(), w.data(), w.data() + w.size());
    flat.insert(flat.end(), b.data(), b.data() + b.size());
  };
  for (const auto& layer : net.raw_layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) push(d->weight, d->bias);
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) push(c->weight, c->bias);
  }
  return flat;
}

void assign_parameters(Network& net, std::span<const double> flat) {
  if (flat.size() != net.parameter_count()) throw std::invalid_argument("assign_parameters: size mismatch");
  std::size_t pos = 0;
  auto pull = [&](Eigen::MatrixXd& w, Eigen::VectorXd& b) {
    std::copy_n(flat.begin() + pos, w.size(), w.data());
    pos += w.size();
    std::copy_n(flat.begin() + pos, b.size(), b.data());
    pos += b.size();
  };
  for (auto& layer : net.mutable_raw_layers()) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) pull(d->weight, d->bias);
    if (auto* c = std::get_if<Conv2dLayer>(&layer)) pull(c->weight, c->bias);
  }
}

std::vector<double> flatten_gradients(const Network& net, const Gradients& grads) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  const auto layers = net.raw_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!is_parameterized(layers[i])) continue;
    flat.insert(flat.end(), grads[i].weight.data(), grads[i].weight.data() + grads[i].weight.size());
    flat.insert(flat.end(), grads[i].bias.data(), grads[i].bias.data() + grads[i].bias.size());
  }
  return flat;
}

namespace {

struct AdamState {
  Gradients m, v;
  long step = 0;
};

template <typename Update>
void for_each_param(Network& net, const Gradients& grads, Update&& update) {
  auto layers = net.mutable_raw_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto* d = std::get_if<DenseLayer>(&layers[i])) update(i, d->weight, d->bias, grads[i]);
    if (auto* c = std::get_if<Conv2dLayer>(&layers[i])) update(i, c->weight, c->bias, grads[i]);
  }
}

}  // namespace

std::vector<int> training_labels(std::span<const int> labels, int num_classes, const TrainConfig& cfg) {
  Rng noise_rng = make_rng(cfg.seed, {0x6e6f697365ULL});
  return apply_label_noise(labels, num_classes, cfg.label_noise_fraction, noise_rng);
}

TrainResult train(const Network& net, const Matrix& inputs, std::span<const int> labels, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (inputs.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw std::invalid_argument("train: input/label count mismatch");
  }
  TrainResult result{net, {}, 0.0, {}};
  Rng rng = make_rng(cfg.seed, {0x7261696eULL});
  result.labels = training_labels(labels, net.num_classes(), cfg);

  Network& model = result.network;
  const auto n = static_cast<std::size_t>(inputs.rows());
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Gradients grads;
  Matrix batch;
  std::vector<int> batch_labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t len = std::min(batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(len), inputs.cols());
      batch_labels.resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        batch.row(static_cast<Eigen::Index>(j)) = inputs.row(static_cast<Eigen::Index>(order[start + j]));
        batch_labels[j] = result.labels[order[start + j]];
      }
      if (hooks.augment) hooks.augment(batch, rng);
      const double loss = loss_and_gradients(model, batch, batch_labels, cfg.weight_decay, &grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                               std::to_string(start) + " (lr=" + std::to_string(cfg.learning_rate) + ")");
      }
      loss_sum += loss * static_cast<double>(len);
      seen += len;

      if (cfg.optimizer == Optimizer::sgd) {
        for_each_param(model, grads, [&](std::size_t, Eigen::MatrixXd& w, Eigen::VectorXd& b, const ParamGrad& g) {
          w -= cfg.learning_rate * g.weight;
          b -= cfg.learning_rate * g.bias;
        });
      } else {
        if (adam.m.empty()) {
          adam.m.assign(grads.size(), ParamGrad{});
          adam.v.assign(grads.size(), ParamGrad{});
          for (std::size_t i = 0; i < grads.size(); ++i) {
            if (grads[i].weight.size() == 0) continue;
            adam.m[i] = {Eigen::MatrixXd::Zero(grads[i].weight.rows(), grads[i].weight.cols()),
                         Eigen::VectorXd::Zero(grads[i].bias.size())};
            adam.v[i] = adam.m[i];
          }
        }
        ++adam.step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
        const double step = cfg.learning_rate * std::sqrt(c2) / c1;
        for_each_param(model, grads, [&](std::size_t i, Eigen::MatrixXd& w, Eigen::VectorXd& b, const ParamGrad& g) {
          auto& m = adam.m[i];
          auto& v = adam.v[i];
          m.weight = beta1 * m.weight + (1.0 - beta1) * g.weight;
          v.weight = beta2 * v.weight + (1.0 - beta2) * g.weight.cwiseAbs2();
          m.bias = beta1 * m.bias + (1.0 - beta1) * g.bias;
          v.bias = beta2 * v.bias + (1.0 - beta2) * g.bias.cwiseAbs2();
          w.array() -= step * m.weight.array() / (v.weight.array().sqrt() + eps);
          b.array() -= step * m.bias.array() / (v.bias.array().sqrt() + eps);
        });
      }
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(seen), std::nullopt};
    if (hooks.validation_inputs && !hooks.validation_labels.empty()) {
      entry.validation_accuracy = accuracy(model, *hooks.validation_inputs, hooks.validation_labels);
    }
    result.log.push_back(entry);
  }
  if (!model.all_finite()) throw TrainingDiverged("weights became non-finite");
  result.train_accuracy = accuracy(model, inputs, result.labels);
  return result;
}

}  // namespace prgauge
