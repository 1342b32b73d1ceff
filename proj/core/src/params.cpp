#include "pie/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Tensor ParameterStore::get_or_create(const std::string& name, const Shape& shape, Init init,
                                     std::size_t fan_in, double value) {
  if (auto it = by_name_.find(name); it != by_name_.end()) {
    if (it->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' exists with shape " +
                       shape_str(it->second.shape()) + ", requested " + shape_str(shape));
    }
    return it->second;
  }
  std::vector<double> data(numel(shape));
  switch (init) {
    case Init::uniform_fan_in: {
      const double bound = 1.0 / std::sqrt(double(std::max<std::size_t>(fan_in, 1)));
      for (auto& v : data) v = rng_.uniform(-bound, bound);
      break;
    }
    case Init::normal_small:
      for (auto& v : data) v = rng_.normal(0.0, 0.02);
      break;
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(data.begin(), data.end(), 1.0);
      break;
    case Init::constant:
      std::fill(data.begin(), data.end(), value);
      break;
  }
  Tensor t(shape, std::move(data), true);
  by_name_.emplace(name, t);
  order_.push_back(name);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : by_name_) n += t.size();
  return n;
}

std::size_t ParameterStore::elements_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : by_name_)
    if (name.rfind(prefix, 0) == 0) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : by_name_) t.zero_grad();
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : by_name_)
    for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

Linear Linear::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                      std::size_t out) {
  return Linear{store.get_or_create(prefix + ".weight", {in, out}, Init::uniform_fan_in, in),
                store.get_or_create(prefix + ".bias", {out}, Init::uniform_fan_in, in)};
}

Tensor Linear::operator()(const Tensor& x) const { return ops::add(ops::matmul(x, weight), bias); }

LayerNormParams LayerNormParams::create(ParameterStore& store, const std::string& prefix,
                                        std::size_t dim) {
  return LayerNormParams{store.get_or_create(prefix + ".gain", {dim}, Init::ones),
                         store.get_or_create(prefix + ".bias", {dim}, Init::zeros)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias); }

Checkpoint snapshot(const ParameterStore& store, std::uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  for (const auto& name : store.names()) {
    auto t = store.get(name);
    ckpt.entries.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  return ckpt;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  }
  return v;
}

constexpr char kMagic[8] = {'P', 'I', 'E', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Written beside the target and renamed, so an interrupted save leaves the previous file intact.
  auto tmp = path;
  tmp += ".tmp";
  std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, ckpt.version);
  put<std::uint64_t>(os, ckpt.config_hash);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(e.values.data()),
             static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  os.close();
  if (!os) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.version = take<std::uint32_t>(is, "version");
  if (ckpt.version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.config_hash = take<std::uint64_t>(is, "config hash");
  auto count = take<std::uint32_t>(is, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    auto len = take<std::uint32_t>(is, "name length");
    e.name.resize(len);
    if (!is.read(e.name.data(), len)) throw std::runtime_error("checkpoint truncated in name");
    auto rank = take<std::uint32_t>(is, "rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(take<std::uint64_t>(is, "dim"));
    e.values.resize(numel(e.shape));
    if (!is.read(reinterpret_cast<char*>(e.values.data()),
                 static_cast<std::streamsize>(e.values.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint truncated in values of '" + e.name + "'");
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  if (ckpt.entries.size() != store.count()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.entries.size()) +
                             " parameters, model has " + std::to_string(store.count()));
  }
  for (const auto& e : ckpt.entries) {
    if (!store.contains(e.name)) throw std::runtime_error("checkpoint parameter '" + e.name + "' not in model");
    auto t = store.get(e.name);
    if (t.shape() != e.shape) {
      throw ShapeError("checkpoint parameter '" + e.name + "' has shape " + shape_str(e.shape) +
                       ", model expects " + shape_str(t.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), t.mutable_data().begin());
  }
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pie
