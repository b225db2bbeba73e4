#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prgauge/nn.hpp"

namespace prgauge {

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  Network network;
  std::uint64_t seed = 0;
  nlohmann::json hyperparams = nlohmann::json::object();
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Model document: header fields plus one base64 blob of little-endian float32
/// values per layer (weight column-major, then bias; empty for parameterless layers).
nlohmann::json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace prgauge
