#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pie/rng.hpp"
#include "pie/tensor.hpp"

namespace pie {

enum class Init {
  uniform_fan_in,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  normal_small,    // N(0, 0.02), for embeddings and learnable queries
  zeros,
  ones,
  constant,
};

/// Named parameter registry. Requesting an existing name returns the same
/// storage, which is how weight sharing is expressed.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor get_or_create(const std::string& name, const Shape& shape, Init init,
                       std::size_t fan_in = 1, double value = 0.0);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }
  std::size_t total_elements() const;
  // Parameter count under a name prefix, e.g. "ami.".
  std::size_t elements_with_prefix(const std::string& prefix) const;

  void zero_grad();
  double grad_norm() const;

 private:
  Rng rng_;
  std::map<std::string, Tensor> by_name_;
  std::vector<std::string> order_;
};

/// Affine map x (rows, in) -> (rows, out).
struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  static Linear create(ParameterStore& store, const std::string& prefix, std::size_t in,
                       std::size_t out);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams create(ParameterStore& store, const std::string& prefix, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
};

// Binary checkpoint:
//   "PIECKPT1" | u32 version | u64 config hash | u32 count |
//   count x { u32 name_len | name | u32 rank | rank x u64 dim | f64 values }
// All integers and doubles little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::vector<CheckpointEntry> entries;
};

Checkpoint snapshot(const ParameterStore& store, std::uint64_t config_hash);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies values into matching parameters; names and shapes must agree exactly.
void restore(ParameterStore& store, const Checkpoint& ckpt);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace pie
