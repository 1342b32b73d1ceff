#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pie/anchors.hpp"
#include "pie/model.hpp"
#include "pie/scenario.hpp"

namespace pie::loss {

struct LossWeights {
  double lambda_v = 1.0;
  double lambda_a = 0.5;
};

/// Mean absolute error over all components; an empty prediction gives 0.
Tensor velocity_loss(const Tensor& pred, const Tensor& gt);

/// -log softmax(logits)[command]. `command` must be one of the three action classes.
Tensor action_loss(const Tensor& logits, Command command);

/// Mean |dx|, |dy| over the 8 waypoints plus mean 0.5 (1 - cos dheading).
Tensor trajectory_loss(const Tensor& pred, const Trajectory& gt);

/// Greedy one-to-one matching of predicted slots to agents by centre distance:
/// repeatedly take the closest remaining pair under `threshold`. Returns
/// (slot, agent) pairs in the order they were taken.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const geom::Vec2> predicted,
                                                              std::span<const geom::Vec2> agents,
                                                              double threshold = 2.0);

struct BoxLoss {
  Tensor value;
  std::vector<std::pair<std::size_t, std::size_t>> matches;
};

/// L1 on (x, y, length, width) and 0.5 (1 - cos) on heading for matched
/// slots, plus existence binary cross-entropy over every slot.
BoxLoss box_loss(const Tensor& boxes, std::span<const world::AgentState> agents, double threshold = 2.0);

/// Index of the anchor closest to `gt` in (x, y) over all waypoints.
std::size_t nearest_anchor(const std::vector<Trajectory>& anchors, const Trajectory& gt);

/// Anchor class and index used as the regression origin during training: the
/// ground-truth command's class, or the nearest anchor overall for "unknown".
model::AnchorChoice teacher_anchor(const anchors::AnchorBank& bank, const world::Scenario& sc);

struct LossParts {
  Tensor planning;  // trajectory + boxes + anchor classification
  Tensor velocity;
  Tensor action;
};

/// Total = planning + lambda_v velocity + lambda_a action. Throws
/// std::domain_error when a part is not finite.
Tensor total_loss(const LossParts& parts, const LossWeights& w);

/// Every loss term for one teacher-forced forward pass (see teacher_anchor).
LossParts compute_parts(const model::Output& out, const world::Scenario& sc, double match_threshold = 2.0);

}  // namespace pie::loss
