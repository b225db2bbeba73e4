#include "prgauge/model_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <stdexcept>

#include "prgauge/io.hpp"

namespace prgauge {

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::vector<std::uint8_t> pack_floats(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(4 * static_cast<std::size_t>(w.size() + b.size()));
  auto push = [&](double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(bits >> s));
  };
  for (Eigen::Index i = 0; i < w.size(); ++i) push(w.data()[i]);
  for (Eigen::Index i = 0; i < b.size(); ++i) push(b[i]);
  return bytes;
}

void unpack_floats(const std::vector<std::uint8_t>& bytes, Eigen::MatrixXd& w, Eigen::VectorXd& b,
                   std::size_t layer) {
  if (bytes.size() != 4 * static_cast<std::size_t>(w.size() + b.size())) {
    throw std::runtime_error("model file: layer " + std::to_string(layer) + " weight blob has wrong length");
  }
  auto read = [&](std::size_t idx) {
    std::uint32_t bits = 0;
    for (int s = 0; s < 4; ++s) bits |= static_cast<std::uint32_t>(bytes[4 * idx + s]) << (8 * s);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = read(idx++);
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = read(idx++);
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t chunk = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                                (i + 1 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 1]) << 8 : 0) |
                                (i + 2 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 2]) : 0);
    out.push_back(kAlphabet[(chunk >> 18) & 63]);
    out.push_back(kAlphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::runtime_error("base64: length is not a multiple of 4");
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      int v = 0;
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
      } else {
        v = lookup[static_cast<unsigned char>(c)];
        if (v < 0 || pad) throw std::runtime_error("base64: invalid character");
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>(chunk >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(chunk >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk));
  }
  return out;
}

nlohmann::json model_to_json(const ModelFile& model) {
  const Network& net = model.network;
  nlohmann::json arch = nlohmann::json::array();
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& layer : net.raw_layers()) {
    nlohmann::json entry{{"type", layer_type_name(layer)}};
    std::string blob;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      entry["in"] = d->weight.cols();
      entry["out"] = d->weight.rows();
      blob = base64_encode(pack_floats(d->weight, d->bias));
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      entry["in_channels"] = c->in_channels;
      entry["out_channels"] = c->out_channels;
      entry["kernel"] = c->kernel;
      entry["stride"] = c->stride;
      blob = base64_encode(pack_floats(c->weight, c->bias));
    }
    arch.push_back(std::move(entry));
    weights.push_back(std::move(blob));
  }
  return nlohmann::json{{"format_version", kModelFormatVersion},
                        {"arch", std::move(arch)},
                        {"k", net.num_classes()},
                        {"dims", net.input_shape().dims},
                        {"seed", model.seed},
                        {"hyperparams", model.hyperparams},
                        {"weights", std::move(weights)}};
}

ModelFile model_from_json(const nlohmann::json& doc) {
  if (doc.value("format_version", 0) != kModelFormatVersion) {
    throw std::runtime_error("model file: unsupported format_version");
  }
  const auto& arch = doc.at("arch");
  const auto& weights = doc.at("weights");
  if (arch.size() != weights.size()) throw std::runtime_error("model file: arch/weights length mismatch");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const auto& entry = arch[i];
    const std::string type = entry.at("type");
    const std::string blob = weights[i];
    if (type == "dense") {
      DenseLayer d{Eigen::MatrixXd(entry.at("out").get<int>(), entry.at("in").get<int>()),
                   Eigen::VectorXd(entry.at("out").get<int>())};
      unpack_floats(base64_decode(blob), d.weight, d.bias, i);
      layers.emplace_back(std::move(d));
    } else if (type == "conv2d") {
      Conv2dLayer c;
      c.in_channels = entry.at("in_channels");
      c.out_channels = entry.at("out_channels");
      c.kernel = entry.at("kernel");
      c.stride = entry.at("stride");
      c.weight.resize(c.out_channels, c.in_channels * c.kernel * c.kernel);
      c.bias.resize(c.out_channels);
      unpack_floats(base64_decode(blob), c.weight, c.bias, i);
      layers.emplace_back(std::move(c));
    } else if (type == "relu") {
      layers.emplace_back(ReluLayer{});
    } else if (type == "flatten") {
      layers.emplace_back(FlattenLayer{});
    } else if (type == "softmax") {
      layers.emplace_back(SoftmaxLayer{});
    } else {
      throw std::runtime_error("model file: unknown layer type '" + type + "'");
    }
  }
  ModelFile model;
  model.network = Network(Shape{doc.at("dims").get<std::vector<int>>()}, doc.at("k").get<int>(), std::move(layers));
  model.seed = doc.value("seed", std::uint64_t{0});
  model.hyperparams = doc.value("hyperparams", nlohmann::json::object());
  return model;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  write_text_file(path, model_to_json(model).dump(1) + "\n");
}

ModelFile load_model(const std::filesystem::path& path) {
  return model_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace prgauge
