#include "pie/interaction.hpp"

#include "pie/ops.hpp"

namespace pie::interaction {

InteractionParams InteractionParams::create(ParameterStore& store, const std::string& prefix,
                                            std::size_t model_dim, std::size_t n_heads, Mode mode) {
  InteractionParams p;
  p.mode = mode;
  if (mode == Mode::off) return p;
  if (mode == Mode::shared) {
    p.first = attention::AttentionParams::create(store, prefix + ".attn", model_dim, n_heads);
    p.second = attention::AttentionParams::create(store, prefix + ".attn", model_dim, n_heads);
  } else {
    p.first = attention::AttentionParams::create(store, prefix + ".attn0", model_dim, n_heads);
    p.second = attention::AttentionParams::create(store, prefix + ".attn1", model_dim, n_heads);
  }
  p.norm_first = LayerNormParams::create(store, prefix + ".norm0", model_dim);
  p.norm_second = LayerNormParams::create(store, prefix + ".norm1", model_dim);
  return p;
}

Tensor interact(const InteractionParams& params, const InteractionInput& in) {
  if (params.mode == Mode::off) return in.trajectory;
  if (in.trajectory.rank() != 2 || in.trajectory.dim(0) != 1 || in.action.rank() != 2 ||
      in.action.dim(0) != 1) {
    throw ShapeError("interaction: trajectory " + shape_str(in.trajectory.shape()) + " and action " +
                     shape_str(in.action.shape()) + " must be single rows");
  }
  auto refined = params.norm_first(
      ops::add(in.trajectory, attention::attend(params.first, in.trajectory, in.action, in.action)));
  if (!in.motion.defined() || in.motion.size() == 0) return refined;
  return params.norm_second(
      ops::add(refined, attention::attend(params.second, refined, in.motion, in.motion)));
}

}  // namespace pie::interaction
