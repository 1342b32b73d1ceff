#include "pie/red.hpp"

#include "pie/ops.hpp"

namespace pie::red {

namespace {

Tensor rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t n = x.dim(0);
  std::vector<std::size_t> sizes;
  if (begin) sizes.push_back(begin);
  sizes.push_back(count);
  if (begin + count < n) sizes.push_back(n - begin - count);
  if (sizes.size() == 1) return x;
  return ops::split(x, 0, sizes)[begin ? 1 : 0];
}

// Box head outputs are scaled so that O(1) activations cover the BEV extent.
const Tensor& box_scale() {
  static const Tensor s = Tensor::vector({10.0, 10.0, 1.0, 1.0, 1.0, 1.0});
  return s;
}
const Tensor& box_offset() {
  static const Tensor s = Tensor::vector({0.0, 0.0, 3.0, 1.5, 0.0, 0.0});
  return s;
}
const Tensor& velocity_scale() {
  static const Tensor s = Tensor::vector({5.0, 5.0});
  return s;
}

}  // namespace

QueryBank QueryBank::create(ParameterStore& store, const std::string& prefix, std::size_t n_agent_slots,
                            std::size_t model_dim) {
  return QueryBank{store.get_or_create(prefix + ".queries", {n_agent_slots + 1, model_dim}, Init::normal_small)};
}

LayerParams LayerParams::create(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg) {
  const std::size_t D = cfg.model_dim;
  LayerParams p;
  if (cfg.reasoning) {
    p.mamba = ssm::BlockParams::create(store, prefix + ".mamba", D, cfg.state_dim);
    p.norm_mamba = LayerNormParams::create(store, prefix + ".norm_mamba", D);
    if (cfg.moe) {
      p.moe = moe::MoeParams::create(store, prefix + ".moe", cfg.n_experts, D, cfg.hidden());
      p.norm_moe = LayerNormParams::create(store, prefix + ".norm_moe", D);
    }
  }
  p.cross_first = attention::AttentionParams::create(store, prefix + ".cross1", D, cfg.n_heads);
  p.norm_cross_first = LayerNormParams::create(store, prefix + ".norm_cross1", D);
  p.self_attn = attention::AttentionParams::create(store, prefix + ".self", D, cfg.n_heads);
  p.norm_self = LayerNormParams::create(store, prefix + ".norm_self", D);
  p.cross_second = attention::AttentionParams::create(store, prefix + ".cross2", D, cfg.n_heads);
  p.norm_cross_second = LayerNormParams::create(store, prefix + ".norm_cross2", D);
  return p;
}

Tensor RedLayerOutput::bbox_features() const { return rows(intermediate, 1, intermediate.dim(0) - 1); }
Tensor RedLayerOutput::velocity_features() const { return rows(final, 1, final.dim(0) - 1); }
Tensor RedLayerOutput::ego_feature() const { return rows(final, 0, 1); }

RedLayerOutput red_layer(const LayerParams& params, const Tensor& q_in, const Tensor& enc,
                         const DecoderConfig& cfg, Rng* rng) {
  if (q_in.rank() != 2 || enc.rank() != 2 || q_in.dim(1) != enc.dim(1)) {
    throw ShapeError("red layer: queries " + shape_str(q_in.shape()) + " and encoder features " +
                     shape_str(enc.shape()) + " must share the feature dimension");
  }
  RedLayerOutput out;
  Tensor h = q_in;
  if (cfg.reasoning) {
    h = params.norm_mamba(ssm::block_forward(params.mamba, h));
    if (cfg.moe) {
      auto routed = moe::forward(params.moe, h, cfg.gate, rng);
      out.gate_trace = std::move(routed.decisions);
      h = params.norm_moe(ops::add(h, routed.y));
    }
  }
  out.intermediate =
      params.norm_cross_first(ops::add(h, attention::attend(params.cross_first, h, enc, enc)));
  auto enc_self = params.norm_self(ops::add(enc, attention::attend(params.self_attn, enc, enc, enc)));
  out.final = params.norm_cross_second(ops::add(
      out.intermediate, attention::attend(params.cross_second, out.intermediate, enc_self, enc_self)));
  return out;
}

Decoder Decoder::create(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg) {
  if (cfg.n_layers < 1) throw std::invalid_argument("decoder needs at least one layer");
  Decoder d;
  d.cfg = cfg;
  d.queries = QueryBank::create(store, prefix, cfg.n_agent_slots, cfg.model_dim);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    d.layers.push_back(LayerParams::create(store, prefix + ".layer" + std::to_string(i), cfg));
  }
  return d;
}

RedLayerOutput decode(const Decoder& decoder, const Tensor& enc, Rng* rng,
                      std::vector<RedLayerOutput>* all_layers) {
  Tensor q = decoder.queries.queries;
  RedLayerOutput out;
  for (const auto& layer : decoder.layers) {
    out = red_layer(layer, q, enc, decoder.cfg, rng);
    if (all_layers) all_layers->push_back(out);
    q = out.final;
  }
  return out;
}

HeadParams HeadParams::create(ParameterStore& store, const std::string& prefix, std::size_t D) {
  HeadParams h;
  h.action_proj = Linear::create(store, prefix + ".action_proj", D, D);
  h.action_out = Linear::create(store, prefix + ".action_out", D, kActionClasses);
  h.box_hidden = Linear::create(store, prefix + ".box_hidden", D, D);
  h.box_out = Linear::create(store, prefix + ".box_out", D, kBoxFields);
  h.vel_hidden = Linear::create(store, prefix + ".vel_hidden", D, D);
  h.vel_out = Linear::create(store, prefix + ".vel_out", D, 2);
  h.traj_hidden = Linear::create(store, prefix + ".traj_hidden", D + 3 * kWaypoints, D);
  h.traj_out = Linear::create(store, prefix + ".traj_out", D, 3 * kWaypoints);
  return h;
}

Tensor action_feature(const HeadParams& heads, const RedLayerOutput& out) {
  return heads.action_proj(out.ego_feature());
}

Tensor action_logits(const HeadParams& heads, const Tensor& feature) {
  return ops::reshape(heads.action_out(feature), {kActionClasses});
}

Tensor box_head(const HeadParams& heads, const Tensor& features) {
  auto raw = heads.box_out(ops::silu(heads.box_hidden(features)));
  return ops::add(ops::mul(raw, box_scale()), box_offset());
}

Tensor velocity_head(const HeadParams& heads, const Tensor& features) {
  return ops::mul(heads.vel_out(ops::silu(heads.vel_hidden(features))), velocity_scale());
}

Tensor trajectory_tensor(const Trajectory& traj) {
  std::vector<double> v;
  v.reserve(3 * kWaypoints);
  for (const auto& p : traj.points) {
    v.push_back(p.x);
    v.push_back(p.y);
    v.push_back(p.heading);
  }
  return Tensor::matrix(kWaypoints, 3, std::move(v));
}

Trajectory to_trajectory(const Tensor& t) {
  if (t.size() != 3 * kWaypoints) throw ShapeError("trajectory tensor must hold 8 x 3 values, got " + shape_str(t.shape()));
  Trajectory traj;
  for (std::size_t i = 0; i < kWaypoints; ++i) {
    traj.points[i] = Pose{t[3 * i], t[3 * i + 1], t[3 * i + 2]};
  }
  return traj;
}

Tensor trajectory_head(const HeadParams& heads, const Tensor& feature, const Trajectory& anchor) {
  auto anchor_t = trajectory_tensor(anchor);
  auto anchor_in = ops::reshape(ops::scale(anchor_t, 0.1), {1, 3 * kWaypoints});
  auto hidden = ops::silu(heads.traj_hidden(ops::concat({feature, anchor_in}, 1)));
  auto offsets = ops::reshape(heads.traj_out(hidden), {kWaypoints, 3});
  auto traj = ops::add(anchor_t, offsets);
  // Heading wrap as an additive constant: identity gradient.
  std::vector<double> shift(3 * kWaypoints, 0.0);
  bool any = false;
  for (std::size_t i = 0; i < kWaypoints; ++i) {
    const double h = traj[3 * i + 2];
    shift[3 * i + 2] = wrap_angle(h) - h;
    any |= shift[3 * i + 2] != 0.0;
  }
  return any ? ops::add(traj, Tensor::matrix(kWaypoints, 3, std::move(shift))) : traj;
}

HeadOutputs heads(const HeadParams& params, const RedLayerOutput& out, const Trajectory& anchor,
                  const Tensor* trajectory_feature) {
  HeadOutputs h;
  h.action_logits = action_logits(params, action_feature(params, out));
  h.boxes = box_head(params, out.bbox_features());
  h.velocities = velocity_head(params, out.velocity_features());
  h.trajectory = trajectory_head(params, trajectory_feature ? *trajectory_feature : out.ego_feature(), anchor);
  return h;
}

}  // namespace pie::red
