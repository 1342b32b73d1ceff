#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pie/anchors.hpp"
#include "pie/fusion.hpp"
#include "pie/interaction.hpp"
#include "pie/red.hpp"
#include "pie/scenario.hpp"

namespace pie::model {

enum class FusionMode { none, plus_plus, plus_minus };

std::string_view to_string(FusionMode m);
std::optional<FusionMode> fusion_from_string(std::string_view s);
std::string_view to_string(interaction::Mode m);
std::optional<interaction::Mode> interaction_from_string(std::string_view s);

struct ModelConfig {
  std::size_t model_dim = 32;
  std::size_t state_dim = 8;
  FusionMode fusion = FusionMode::plus_minus;
  std::size_t fusion_layers = 2;
  bool sinusoidal_positions = false;  // added to both modality sequences before fusion
  red::DecoderConfig decoder;
  interaction::Mode interaction = interaction::Mode::shared;
  std::size_t image_rows = 4;
  std::size_t image_cols = 16;
  std::size_t lidar_rows = 8;
  std::size_t lidar_cols = 8;
  std::uint64_t seed = 0;

  // Stable "key = value" listing of every field; the checkpoint hash is taken over it.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Which anchor the trajectory head regresses from.
struct AnchorChoice {
  Command cls = Command::straight;
  std::size_t index = 0;
};

struct Output {
  Tensor trajectory;     // (8, 3)
  Tensor boxes;          // (n_agent_slots, 6)
  Tensor velocities;     // (n_agent_slots, 2)
  Tensor action_logits;  // (3)
  Tensor anchor_scores;  // (anchors in the chosen class)
  Tensor action_feature;
  Tensor motion_features;
  Tensor trajectory_feature;
  AnchorChoice anchor;
  std::vector<moe::GateDecision> gate_trace;
};

class PieModel {
 public:
  explicit PieModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  /// Encoder tokens: fused image and LiDAR sequences followed by the ego token, (L_img + L_lid + 1, D).
  Tensor encode(const world::Scenario& sc) const;

  /// Full forward pass. `rng` enables MoE dropout (training). `teacher`
  /// overrides the anchor class and index used by the trajectory head.
  Output forward(const world::Scenario& sc, const anchors::AnchorBank& bank, Rng* rng = nullptr,
                 const std::optional<AnchorChoice>& teacher = std::nullopt) const;

  /// Inference without gradient tracking.
  Trajectory plan(const world::Scenario& sc, const anchors::AnchorBank& bank) const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  Linear image_embed_;
  Linear lidar_embed_;
  Linear ego_embed_;
  fusion::Branch branch_a_;
  fusion::Branch branch_b_;
  LayerNormParams enc_norm_;
  red::Decoder decoder_;
  red::HeadParams heads_;
  interaction::InteractionParams interaction_;
  anchors::ScorerParams scorer_;
};

/// Raw per-token inputs: the grid's channels followed by the cell's normalised
/// position, (rows * cols, channels + 2).
Tensor grid_tokens(const world::Grid& g, bool polar);
/// [speed / 10, accel, one-hot command (4)], shape (1, 6).
Tensor ego_status(const world::Scenario& sc);

}  // namespace pie::model
