#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pie/generator.hpp"
#include "pie/model.hpp"
#include "pie/train.hpp"

namespace pie::config {

enum class Type { integer, real, boolean, text };

/// Raised for unknown keys, malformed files and values that do not parse as the key's type.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat dotted-key configuration. Every key is declared with a type and a
/// default; layers (file, environment, flags) override values in that order.
class RunConfig {
 public:
  struct Entry {
    Type type;
    std::string value;
    std::string source = "default";
  };

  /// All module defaults.
  static RunConfig defaults();

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const Entry& entry(const std::string& key) const;
  std::vector<std::string> keys() const;

  /// Checked assignment; `source` is recorded for the snapshot.
  void set(const std::string& key, const std::string& value, const std::string& source = "flag");

  /// `key = value` lines; '#' starts a comment.
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& source);
  /// PIE_MODEL_DIM style variables. Only variables that name a declared key are read.
  void merge_env(char** envp);

  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  const std::string& text(const std::string& key) const;

  /// Resolved `key = value` listing in key order; merge_text of it reproduces the config.
  std::string snapshot() const;
  void write_snapshot(const std::filesystem::path& path) const;

 private:
  void declare(const std::string& key, Type type, std::string value);
  std::map<std::string, Entry> entries_;
};

/// Environment variable for a dotted key: "model.dim" -> "PIE_MODEL_DIM".
std::string env_name(const std::string& key);

model::ModelConfig model_config(const RunConfig& c);
world::GeneratorConfig generator_config(const RunConfig& c);
pdm::ScorerConfig scorer_config(const RunConfig& c);
train::TrainConfig train_config(const RunConfig& c);

}  // namespace pie::config
