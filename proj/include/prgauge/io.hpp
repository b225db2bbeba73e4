#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prgauge {

/// A required input artifact does not exist.
class MissingPrerequisite : public std::runtime_error {
 public:
  explicit MissingPrerequisite(const std::filesystem::path& path)
      : std::runtime_error("missing prerequisite: " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Malformed text input, with the 1-based line that failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically enough for resumable runs: temp file then rename.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Round-trip exact decimal rendering ("%.17g") so artifacts are byte-stable.
std::string format_double(double v);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::vector<std::string> split(std::string_view line, char sep);
std::string trim(std::string_view s);
double parse_double(const std::string& text, const std::string& source, std::size_t line);

}  // namespace prgauge
