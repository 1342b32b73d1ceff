#pragma once

#include <string>

#include "pie/attention.hpp"

namespace pie::interaction {

enum class Mode {
  shared,    // both passes read one attention parameter set
  unshared,  // each pass has its own parameter set
  off,       // trajectory feature passes through unchanged
};

struct InteractionParams {
  Mode mode = Mode::shared;
  attention::AttentionParams first;
  attention::AttentionParams second;  // aliases `first` in shared mode
  LayerNormParams norm_first;
  LayerNormParams norm_second;

  static InteractionParams create(ParameterStore& store, const std::string& prefix, std::size_t model_dim,
                                  std::size_t n_heads, Mode mode);
};

struct InteractionInput {
  Tensor trajectory;  // (1, D)
  Tensor action;      // (1, D)
  Tensor motion;      // (n_agents, D)
};

/// Pass 1 attends from the trajectory feature to the ego action feature, pass
/// 2 from that result to the agents' motion features; each pass is wrapped in
/// residual + layer norm. With zero agents the second pass is skipped.
Tensor interact(const InteractionParams& params, const InteractionInput& in);

}  // namespace pie::interaction
