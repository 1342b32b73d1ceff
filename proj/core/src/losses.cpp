#include "pie/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie::loss {

namespace {

Tensor one_minus_cos_half(const Tensor& angle_error) {
  return ops::scale(ops::add_scalar(ops::neg(ops::cos(angle_error)), 1.0), 0.5);
}

Tensor scalar_view(const Tensor& t) { return ops::reshape(t, {}); }

}  // namespace

Tensor velocity_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("velocity loss: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(gt.shape()));
  }
  if (pred.size() == 0) return Tensor::scalar(0.0);
  return ops::mean(ops::abs(ops::sub(pred, gt)));
}

Tensor action_loss(const Tensor& logits, Command command) {
  if (command == Command::unknown) throw std::invalid_argument("action loss: 'unknown' is not an action class");
  if (logits.size() != kActionClasses) throw ShapeError("action loss expects 3 logits, got " + shape_str(logits.shape()));
  auto lp = ops::log_softmax(ops::reshape(logits, {kActionClasses}), 0);
  return scalar_view(ops::neg(ops::gather(lp, {static_cast<std::size_t>(command)})));
}

Tensor trajectory_loss(const Tensor& pred, const Trajectory& gt) {
  if (pred.shape() != Shape{kWaypoints, 3}) throw ShapeError("trajectory loss expects (8, 3), got " + shape_str(pred.shape()));
  auto diff = ops::sub(pred, red::trajectory_tensor(gt));
  auto parts = ops::split(diff, 1, {2, 1});
  return ops::add(ops::mean(ops::abs(parts[0])), ops::mean(one_minus_cos_half(parts[1])));
}

std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const geom::Vec2> predicted,
                                                              std::span<const geom::Vec2> agents, double threshold) {
  struct Candidate {
    double dist;
    std::size_t slot, agent;
  };
  std::vector<Candidate> c;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const double d = (predicted[s] - agents[a]).norm();
      if (d < threshold) c.push_back({d, s, a});
    }
  }
  std::stable_sort(c.begin(), c.end(), [](const Candidate& x, const Candidate& y) { return x.dist < y.dist; });
  std::vector<bool> slot_used(predicted.size(), false), agent_used(agents.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& m : c) {
    if (slot_used[m.slot] || agent_used[m.agent]) continue;
    slot_used[m.slot] = agent_used[m.agent] = true;
    out.emplace_back(m.slot, m.agent);
  }
  return out;
}

BoxLoss box_loss(const Tensor& boxes, std::span<const world::AgentState> agents, double threshold) {
  constexpr std::size_t F = red::kBoxFields;
  if (boxes.rank() != 2 || boxes.dim(1) != F) throw ShapeError("box loss expects (slots, 6), got " + shape_str(boxes.shape()));
  const std::size_t slots = boxes.dim(0);
  std::vector<geom::Vec2> pred_centers, gt_centers;
  for (std::size_t s = 0; s < slots; ++s) pred_centers.push_back({boxes.at(s, 0), boxes.at(s, 1)});
  for (const auto& a : agents) gt_centers.push_back({a.x, a.y});

  BoxLoss out;
  out.matches = greedy_match(pred_centers, gt_centers, threshold);

  std::vector<std::size_t> exist_idx(slots);
  std::vector<double> exist_target(slots, 0.0);
  for (std::size_t s = 0; s < slots; ++s) exist_idx[s] = s * F + 5;
  for (const auto& [s, a] : out.matches) exist_target[s] = 1.0;
  auto z = ops::gather(boxes, exist_idx);
  Tensor total = ops::mean(ops::sub(ops::softplus(z), ops::mul(z, Tensor::vector(exist_target))));

  if (!out.matches.empty()) {
    std::vector<std::size_t> reg_idx, head_idx;
    std::vector<double> reg_target, head_target;
    for (const auto& [s, a] : out.matches) {
      const auto& ag = agents[a];
      for (std::size_t k = 0; k < 4; ++k) reg_idx.push_back(s * F + k);
      reg_target.insert(reg_target.end(), {ag.x, ag.y, ag.length, ag.width});
      head_idx.push_back(s * F + 4);
      head_target.push_back(ag.heading);
    }
    auto reg = ops::mean(ops::abs(ops::sub(ops::gather(boxes, reg_idx), Tensor::vector(reg_target))));
    auto head = ops::mean(one_minus_cos_half(ops::sub(ops::gather(boxes, head_idx), Tensor::vector(head_target))));
    total = ops::add(total, ops::add(reg, head));
  }
  out.value = total;
  return out;
}

std::size_t nearest_anchor(const std::vector<Trajectory>& anchors, const Trajectory& gt) {
  if (anchors.empty()) throw std::invalid_argument("nearest_anchor: empty anchor set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < kWaypoints; ++k) {
      const double dx = anchors[i].points[k].x - gt.points[k].x;
      const double dy = anchors[i].points[k].y - gt.points[k].y;
      d += dx * dx + dy * dy;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

model::AnchorChoice teacher_anchor(const anchors::AnchorBank& bank, const world::Scenario& sc) {
  if (sc.command != Command::unknown) {
    return {sc.command, nearest_anchor(bank.of(sc.command), sc.expert)};
  }
  model::AnchorChoice best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < kActionClasses; ++c) {
    const auto& cls = bank.of(Command(c));
    const std::size_t i = nearest_anchor(cls, sc.expert);
    double d = 0.0;
    for (std::size_t k = 0; k < kWaypoints; ++k) {
      d += std::pow(cls[i].points[k].x - sc.expert.points[k].x, 2) + std::pow(cls[i].points[k].y - sc.expert.points[k].y, 2);
    }
    if (d < best_d) {
      best_d = d;
      best = {Command(c), i};
    }
  }
  return best;
}

Tensor total_loss(const LossParts& parts, const LossWeights& w) {
  if (!std::isfinite(w.lambda_v) || !std::isfinite(w.lambda_a) || w.lambda_v < 0.0 || w.lambda_a < 0.0) {
    throw std::invalid_argument("loss weights must be finite and non-negative");
  }
  const std::pair<const char*, const Tensor*> named[] = {
      {"planning", &parts.planning}, {"velocity", &parts.velocity}, {"action", &parts.action}};
  for (const auto& [name, t] : named) {
    if (!std::isfinite(t->item())) throw std::domain_error(std::string("non-finite ") + name + " loss");
  }
  return ops::add(parts.planning,
                  ops::add(ops::scale(parts.velocity, w.lambda_v), ops::scale(parts.action, w.lambda_a)));
}

LossParts compute_parts(const model::Output& out, const world::Scenario& sc, double match_threshold) {
  LossParts p;
  auto boxes = box_loss(out.boxes, sc.agents, match_threshold);
  // With teacher forcing the chosen anchor is the classification target.
  const std::size_t target = out.anchor.index;
  auto anchor_ce = scalar_view(ops::neg(ops::gather(ops::log_softmax(out.anchor_scores, 0), {target})));
  p.planning = ops::add(trajectory_loss(out.trajectory, sc.expert), ops::add(boxes.value, anchor_ce));

  std::vector<std::size_t> vel_idx;
  std::vector<double> vel_target;
  for (const auto& [s, a] : boxes.matches) {
    vel_idx.push_back(2 * s);
    vel_idx.push_back(2 * s + 1);
    vel_target.push_back(sc.agents[a].vx);
    vel_target.push_back(sc.agents[a].vy);
  }
  if (vel_idx.empty()) {
    p.velocity = Tensor::scalar(0.0);
  } else {
    const std::size_t m = vel_idx.size() / 2;
    p.velocity = velocity_loss(ops::reshape(ops::gather(out.velocities, vel_idx), {m, 2}),
                               Tensor::matrix(m, 2, std::move(vel_target)));
  }
  p.action = sc.command == Command::unknown ? Tensor::scalar(0.0) : action_loss(out.action_logits, sc.command);
  return p;
}

}  // namespace pie::loss
