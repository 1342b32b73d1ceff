#include "pie/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie::model {

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::plus_plus: return "++";
    case FusionMode::plus_minus: return "+-";
  }
  return "?";
}

std::optional<FusionMode> fusion_from_string(std::string_view s) {
  if (s == "none") return FusionMode::none;
  if (s == "++" || s == "plus_plus") return FusionMode::plus_plus;
  if (s == "+-" || s == "plus_minus") return FusionMode::plus_minus;
  return std::nullopt;
}

std::string_view to_string(interaction::Mode m) {
  switch (m) {
    case interaction::Mode::shared: return "shared";
    case interaction::Mode::unshared: return "unshared";
    case interaction::Mode::off: return "off";
  }
  return "?";
}

std::optional<interaction::Mode> interaction_from_string(std::string_view s) {
  if (s == "shared") return interaction::Mode::shared;
  if (s == "unshared") return interaction::Mode::unshared;
  if (s == "off") return interaction::Mode::off;
  return std::nullopt;
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  const auto& d = decoder;
  os << "model.dim = " << model_dim << '\n'
     << "model.state_dim = " << state_dim << '\n'
     << "model.fusion = " << to_string(fusion) << '\n'
     << "model.fusion_layers = " << fusion_layers << '\n'
     << "model.sinusoidal_positions = " << sinusoidal_positions << '\n'
     << "model.interaction = " << to_string(interaction) << '\n'
     << "model.image_rows = " << image_rows << '\n'
     << "model.image_cols = " << image_cols << '\n'
     << "model.lidar_rows = " << lidar_rows << '\n'
     << "model.lidar_cols = " << lidar_cols << '\n'
     << "model.seed = " << seed << '\n'
     << "red.layers = " << d.n_layers << '\n'
     << "red.agent_slots = " << d.n_agent_slots << '\n'
     << "red.heads = " << d.n_heads << '\n'
     << "red.reasoning = " << d.reasoning << '\n'
     << "moe.enabled = " << d.moe << '\n'
     << "moe.experts = " << d.n_experts << '\n'
     << "moe.expert_hidden = " << d.expert_hidden << '\n'
     << "moe.k = " << d.gate.k << '\n'
     << "moe.dropout = " << d.gate.p_drop << '\n'
     << "moe.capacity_factor = " << d.gate.capacity_factor << '\n'
     << "moe.capacity = " << d.gate.capacity.value_or(0) << '\n'
     << "moe.use_capacity = " << d.gate.use_capacity << '\n';
  return os.str();
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(canonical()); }

Tensor grid_tokens(const world::Grid& g, bool polar) {
  const std::size_t n = g.height * g.width, ch = g.channels;
  std::vector<double> v;
  v.reserve(n * (ch + 2));
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      for (std::size_t k = 0; k < ch; ++k) v.push_back(g.at(r, c, k));
      // Cell position in [-1, 1]: (range, azimuth) for the image, (x, y) for the BEV grid.
      const double pr = 2.0 * (double(r) + 0.5) / double(g.height) - 1.0;
      const double pc = 2.0 * (double(c) + 0.5) / double(g.width) - 1.0;
      v.push_back(polar ? pr : -pr);
      v.push_back(-pc);
    }
  }
  return Tensor::matrix(n, ch + 2, std::move(v));
}

Tensor ego_status(const world::Scenario& sc) {
  std::vector<double> v{sc.ego.speed / 10.0, sc.ego.accel, 0.0, 0.0, 0.0, 0.0};
  v[2 + static_cast<std::size_t>(sc.command)] = 1.0;
  return Tensor::matrix(1, 6, std::move(v));
}

namespace {

Tensor sinusoidal(std::size_t len, std::size_t dim) {
  std::vector<double> v(len * dim);
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -double(i - i % 2) / double(dim));
      v[p * dim + i] = i % 2 == 0 ? std::sin(double(p) * freq) : std::cos(double(p) * freq);
    }
  }
  return Tensor::matrix(len, dim, std::move(v));
}

}  // namespace

PieModel::PieModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
  const std::size_t D = cfg.model_dim;
  if (D == 0) throw std::invalid_argument("model dim must be positive");
  cfg_.decoder.model_dim = D;
  cfg_.decoder.state_dim = cfg.state_dim;
  image_embed_ = Linear::create(store_, "encoder.image_embed", world::kRawChannels + 2, D);
  lidar_embed_ = Linear::create(store_, "encoder.lidar_embed", world::kRawChannels + 2, D);
  ego_embed_ = Linear::create(store_, "encoder.ego_embed", 6, D);
  if (cfg.fusion != FusionMode::none) {
    branch_a_ = fusion::Branch::create(store_, "fusion.branch_a", cfg.fusion_layers, D, cfg.state_dim);
    branch_b_ = fusion::Branch::create(store_, "fusion.branch_b", cfg.fusion_layers, D, cfg.state_dim);
  }
  enc_norm_ = LayerNormParams::create(store_, "encoder.norm", D);
  decoder_ = red::Decoder::create(store_, "red", cfg_.decoder);
  heads_ = red::HeadParams::create(store_, "heads", D);
  if (cfg.interaction != interaction::Mode::off) {
    interaction_ = interaction::InteractionParams::create(store_, "ami", D, cfg_.decoder.n_heads, cfg.interaction);
  } else {
    interaction_.mode = interaction::Mode::off;
  }
  scorer_ = anchors::ScorerParams::create(store_, "anchor_scorer", D);
}

Tensor PieModel::encode(const world::Scenario& sc) const {
  if (sc.image.height != cfg_.image_rows || sc.image.width != cfg_.image_cols || sc.lidar.height != cfg_.lidar_rows ||
      sc.lidar.width != cfg_.lidar_cols || sc.image.channels != world::kRawChannels ||
      sc.lidar.channels != world::kRawChannels) {
    throw ShapeError("scenario '" + sc.id + "' grids (" + std::to_string(sc.image.height) + "x" +
                     std::to_string(sc.image.width) + ", " + std::to_string(sc.lidar.height) + "x" +
                     std::to_string(sc.lidar.width) + ") do not match the model configuration");
  }
  auto img = image_embed_(grid_tokens(sc.image, true));
  auto lid = lidar_embed_(grid_tokens(sc.lidar, false));
  if (cfg_.sinusoidal_positions) {
    img = ops::add(img, sinusoidal(img.dim(0), cfg_.model_dim));
    lid = ops::add(lid, sinusoidal(lid.dim(0), cfg_.model_dim));
  }
  Tensor img_seq = img, lid_seq = lid;
  if (cfg_.fusion != FusionMode::none) {
    auto ig = fusion::ModalityGrid::from_sequence(fusion::Modality::image, img, cfg_.image_rows, cfg_.image_cols);
    auto lg = fusion::ModalityGrid::from_sequence(fusion::Modality::lidar, lid, cfg_.lidar_rows, cfg_.lidar_cols);
    const auto variant =
        cfg_.fusion == FusionMode::plus_plus ? fusion::Variant::plus_plus : fusion::Variant::plus_minus;
    auto fused = fusion::unidirectional_variant(ig, lg, branch_a_, branch_b_, variant);
    img_seq = fused.image.sequence();
    lid_seq = fused.lidar.sequence();
  }
  auto ego = ego_embed_(ego_status(sc));
  return enc_norm_(ops::concat({img_seq, lid_seq, ego}, 0));
}

Output PieModel::forward(const world::Scenario& sc, const anchors::AnchorBank& bank, Rng* rng,
                         const std::optional<AnchorChoice>& teacher) const {
  auto enc = encode(sc);
  auto out = red::decode(decoder_, enc, rng);
  Output o;
  o.gate_trace = std::move(out.gate_trace);
  o.action_feature = red::action_feature(heads_, out);
  o.action_logits = red::action_logits(heads_, o.action_feature);
  o.motion_features = out.velocity_features();
  o.boxes = red::box_head(heads_, out.bbox_features());
  o.velocities = red::velocity_head(heads_, o.motion_features);
  o.trajectory_feature =
      interaction::interact(interaction_, {out.ego_feature(), o.action_feature, o.motion_features});

  if (teacher) {
    o.anchor = *teacher;
  } else {
    o.anchor.cls = anchors::select_anchor_class(o.action_logits.data());
  }
  const auto& candidates = bank.of(o.anchor.cls);
  o.anchor_scores = scorer_.scores(candidates, o.trajectory_feature);
  if (!teacher) o.anchor.index = anchors::select_anchor(o.anchor_scores.data());
  if (o.anchor.index >= candidates.size()) {
    throw std::out_of_range("anchor index " + std::to_string(o.anchor.index) + " outside class of " +
                            std::to_string(candidates.size()));
  }
  o.trajectory = red::trajectory_head(heads_, o.trajectory_feature, candidates[o.anchor.index]);
  return o;
}

Trajectory PieModel::plan(const world::Scenario& sc, const anchors::AnchorBank& bank) const {
  NoGradGuard guard;
  return red::to_trajectory(forward(sc, bank).trajectory);
}

}  // namespace pie::model
