#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pie/scenario.hpp"

namespace pie::world {

inline constexpr int kDatasetVersion = 1;

/// Raised for records that cannot be decoded; names the line and field path.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// One scenario as a single line of JSON (no trailing newline).
std::string to_record(const Scenario& sc);
Scenario from_record(std::string_view record, std::size_t line_no = 1);

void save_dataset(const std::filesystem::path& path, std::span<const Scenario> scenarios);
std::vector<Scenario> load_dataset(const std::filesystem::path& path);

}  // namespace pie::world
