#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pie/attention.hpp"
#include "pie/moe.hpp"
#include "pie/ssm.hpp"
#include "pie/trajectory.hpp"

namespace pie::red {

struct DecoderConfig {
  std::size_t model_dim = 32;
  std::size_t state_dim = 8;
  std::size_t n_layers = 2;
  std::size_t n_agent_slots = 8;
  std::size_t n_heads = 2;
  std::size_t n_experts = 3;
  std::size_t expert_hidden = 0;  // 0 selects 4 * model_dim
  bool reasoning = true;          // Mamba + MoE stage in front of the cross-attention
  bool moe = true;                // false replaces the MoE with identity
  moe::GateConfig gate;

  std::size_t n_queries() const { return n_agent_slots + 1; }
  std::size_t hidden() const { return expert_hidden ? expert_hidden : 4 * model_dim; }
};

/// Learnable decoder queries; row 0 is the ego slot, rows 1.. are agent slots.
struct QueryBank {
  Tensor queries;  // (n_queries, D)

  static QueryBank create(ParameterStore& store, const std::string& prefix, std::size_t n_agent_slots,
                          std::size_t model_dim);
  std::size_t n_queries() const { return queries.dim(0); }
};

struct LayerParams {
  ssm::BlockParams mamba;
  moe::MoeParams moe;
  attention::AttentionParams cross_first;
  attention::AttentionParams self_attn;
  attention::AttentionParams cross_second;
  LayerNormParams norm_mamba;
  LayerNormParams norm_moe;
  LayerNormParams norm_cross_first;
  LayerNormParams norm_self;
  LayerNormParams norm_cross_second;

  static LayerParams create(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg);
};

struct RedLayerOutput {
  Tensor intermediate;  // after the first cross-attention, (n_queries, D)
  Tensor final;         // after the second cross-attention, (n_queries, D)
  std::vector<moe::GateDecision> gate_trace;

  // Agent slots of `intermediate`.
  Tensor bbox_features() const;
  // Agent slots of `final`; these are also the agents' motion features.
  Tensor velocity_features() const;
  // Ego slot of `final`, (1, D).
  Tensor ego_feature() const;
};

/// Reasoning-enhanced decoder layer:
///   q -> Mamba block -> norm -> MoE (+res, norm) -> cross-attn(enc) (+res, norm) = intermediate
///   enc' = norm(enc + self-attn(enc))
///   final = norm(intermediate + cross-attn(intermediate, enc'))
/// `rng` enables MoE dropout (training); null means inference.
RedLayerOutput red_layer(const LayerParams& params, const Tensor& q_in, const Tensor& enc,
                         const DecoderConfig& cfg, Rng* rng = nullptr);

struct Decoder {
  DecoderConfig cfg;
  QueryBank queries;
  std::vector<LayerParams> layers;

  static Decoder create(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg);
};

/// Chains the layers, each consuming the previous `final`. Returns the last
/// layer's output; `all_layers`, when given, receives every layer's output.
RedLayerOutput decode(const Decoder& decoder, const Tensor& enc, Rng* rng = nullptr,
                      std::vector<RedLayerOutput>* all_layers = nullptr);

// ---- heads ----------------------------------------------------------------

inline constexpr std::size_t kBoxFields = 6;  // x, y, length, width, heading, existence logit

struct HeadParams {
  Linear action_proj;  // ego feature -> action feature
  Linear action_out;   // action feature -> 3 logits
  Linear box_hidden;
  Linear box_out;
  Linear vel_hidden;
  Linear vel_out;
  Linear traj_hidden;  // [trajectory feature | anchor / 10] -> D
  Linear traj_out;     // D -> 8 x 3 offsets

  static HeadParams create(ParameterStore& store, const std::string& prefix, std::size_t model_dim);
};

/// Action feature (1, D) from the ego slot.
Tensor action_feature(const HeadParams& heads, const RedLayerOutput& out);
/// Logits over {left, straight, right}, shape (3).
Tensor action_logits(const HeadParams& heads, const Tensor& action_feature);
/// Per agent slot (x m, y m, length m, width m, heading rad, existence logit).
Tensor box_head(const HeadParams& heads, const Tensor& bbox_features);
/// Per agent slot (vx, vy) in m/s.
Tensor velocity_head(const HeadParams& heads, const Tensor& velocity_features);
/// Anchor plus regressed offsets, (8, 3) with headings wrapped to (-pi, pi].
Tensor trajectory_head(const HeadParams& heads, const Tensor& trajectory_feature, const Trajectory& anchor);

Tensor trajectory_tensor(const Trajectory& traj);
Trajectory to_trajectory(const Tensor& t);

struct HeadOutputs {
  Tensor trajectory;     // (8, 3)
  Tensor boxes;          // (n_agent_slots, 6)
  Tensor velocities;     // (n_agent_slots, 2)
  Tensor action_logits;  // (3)
};

/// All four heads on one decoder output. The trajectory head reads
/// `trajectory_feature` when given (the refined feature), else the ego slot.
HeadOutputs heads(const HeadParams& params, const RedLayerOutput& out, const Trajectory& anchor,
                  const Tensor* trajectory_feature = nullptr);

}  // namespace pie::red
