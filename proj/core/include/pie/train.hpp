#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pie/losses.hpp"
#include "pie/pdm.hpp"

namespace pie::train {

struct AdamWConfig {
  double lr = 2e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled weight decay Adam over every parameter in a store.
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig cfg);

  // theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
  void step();
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

/// Scales every gradient so the global norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  AdamWConfig optimizer;
  loss::LossWeights weights;
  double grad_clip = 5.0;  // 0 disables clipping
  double match_threshold = 2.0;
  std::uint64_t seed = 0;
  std::size_t val_every = 0;  // epochs between validation runs; 0 validates only after the last epoch
  pdm::ScorerConfig scorer;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double planning = 0.0;
  double velocity = 0.0;
  double action = 0.0;
  std::optional<double> val_pdms;
  double wall_time = 0.0;  // seconds since training started
};

std::string to_json_line(const EpochRecord& r);

/// Raised when a loss turns non-finite; the last good checkpoint is kept.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::filesystem::path checkpoint;  // written after every completed epoch when set
};

/// Mean PDMS of the model's plans over a scenario set.
double mean_pdms(const model::PieModel& model, const anchors::AnchorBank& bank, std::span<const world::Scenario> set,
                 const pdm::ScorerConfig& scorer = {});

/// Seeded mini-batch training: per epoch the sample order is a seeded
/// permutation; each batch averages the per-sample total loss and takes one
/// optimizer step.
std::vector<EpochRecord> train(model::PieModel& model, const anchors::AnchorBank& bank,
                               std::span<const world::Scenario> train_set, std::span<const world::Scenario> val_set,
                               const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Loss parts for one scenario under teacher forcing (no dropout).
loss::LossParts evaluate_loss(const model::PieModel& model, const anchors::AnchorBank& bank, const world::Scenario& sc,
                              double match_threshold = 2.0);

}  // namespace pie::train
