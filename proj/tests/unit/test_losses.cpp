#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "fixtures.hpp"
#include "pie/losses.hpp"
#include "pie/ops.hpp"

namespace pie::loss {
namespace {

Trajectory ramp() {
  Trajectory t;
  for (std::size_t i = 0; i < kWaypoints; ++i) t.points[i] = {1.2 * double(i + 1), 0.1 * double(i), 0.05};
  return t;
}

TEST(VelocityLoss, Examples) {
  auto p = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(velocity_loss(p, p).item(), 0.0);
  EXPECT_DOUBLE_EQ(velocity_loss(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {0, 0})).item(), 1.5);
  EXPECT_EQ(velocity_loss(Tensor::zeros({0, 2}), Tensor::zeros({0, 2})).item(), 0.0);
}

TEST(ActionLoss, Examples) {
  EXPECT_LT(action_loss(Tensor::vector({10, 0, 0}), Command::left).item(), 1e-4);
  EXPECT_NEAR(action_loss(Tensor::vector({0.3, 0.3, 0.3}), Command::right).item(), std::log(3.0), 1e-15);
  EXPECT_THROW(action_loss(Tensor::vector({0, 0, 0}), Command::unknown), std::invalid_argument);
}

TEST(TrajectoryLoss, Examples) {
  const auto gt = ramp();
  auto pred = red::trajectory_tensor(gt);
  EXPECT_EQ(trajectory_loss(pred, gt).item(), 0.0);
  auto moved = gt;
  moved.points[3].x += 3.0;
  moved.points[3].y += 4.0;
  EXPECT_DOUBLE_EQ(trajectory_loss(red::trajectory_tensor(moved), gt).item(), 7.0 / 16.0);
}

TEST(TrajectoryLoss, HeadingTermIsPeriodic) {
  const auto gt = ramp();
  auto turned = gt;
  for (auto& p : turned.points) p.heading += 2.0 * std::numbers::pi;
  EXPECT_NEAR(trajectory_loss(red::trajectory_tensor(turned), gt).item(), 0.0, 1e-15);
}

TEST(TotalLoss, Examples) {
  LossParts parts{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0)};
  EXPECT_DOUBLE_EQ(total_loss(parts, {0.5, 0.25}).item(), 1.75);
  LossParts other{Tensor::scalar(2.5), Tensor::scalar(7.0), Tensor::scalar(3.0)};
  EXPECT_DOUBLE_EQ(total_loss(other, {0.0, 0.0}).item(), 2.5);
  LossParts bad{Tensor::scalar(std::numeric_limits<double>::quiet_NaN()), Tensor::scalar(0.0), Tensor::scalar(0.0)};
  EXPECT_THROW(total_loss(bad, {}), std::domain_error);
}

// Ascending distance lists compared lexicographically, with +inf padding for
// unmatched slots: the greedy rule's objective, searched exhaustively.
std::vector<double> sorted_costs(const std::vector<std::pair<std::size_t, std::size_t>>& m,
                                 std::span<const geom::Vec2> p, std::span<const geom::Vec2> a, std::size_t width) {
  std::vector<double> d;
  for (auto [s, g] : m) d.push_back((p[s] - a[g]).norm());
  std::sort(d.begin(), d.end());
  d.resize(width, std::numeric_limits<double>::infinity());
  return d;
}

void exhaustive(std::size_t agent, std::vector<bool>& used, std::vector<std::pair<std::size_t, std::size_t>>& cur,
                std::span<const geom::Vec2> p, std::span<const geom::Vec2> a, double threshold,
                std::vector<double>& best) {
  if (agent == a.size()) {
    auto c = sorted_costs(cur, p, a, best.size());
    if (c < best) best = c;
    return;
  }
  exhaustive(agent + 1, used, cur, p, a, threshold, best);
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (used[s] || (p[s] - a[agent]).norm() >= threshold) continue;
    used[s] = true;
    cur.emplace_back(s, agent);
    exhaustive(agent + 1, used, cur, p, a, threshold, best);
    cur.pop_back();
    used[s] = false;
  }
}

TEST(GreedyMatch, AgreesWithExhaustiveSearch) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ns = std::size_t(rng.integer(1, 8));
    const auto na = std::size_t(rng.integer(0, 6));
    std::vector<geom::Vec2> p(ns), a(na);
    for (auto& v : p) v = {rng.uniform(0, 6), rng.uniform(0, 6)};
    for (auto& v : a) v = {rng.uniform(0, 6), rng.uniform(0, 6)};
    auto greedy = greedy_match(p, a, 2.0);
    const std::size_t width = std::min(ns, na);
    std::vector<double> best(width, std::numeric_limits<double>::infinity());
    std::vector<bool> used(ns, false);
    std::vector<std::pair<std::size_t, std::size_t>> cur;
    exhaustive(0, used, cur, p, a, 2.0, best);
    EXPECT_EQ(sorted_costs(greedy, p, a, width), best);
  }
}

TEST(GreedyMatch, ThresholdAndOrder) {
  const std::vector<geom::Vec2> p = {{0, 0}, {10, 0}, {5, 5}};
  const std::vector<geom::Vec2> a = {{10.5, 0}, {0.2, 0}, {30, 30}};
  auto m = greedy_match(p, a, 2.0);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(m[1], (std::pair<std::size_t, std::size_t>{1, 0}));
}

TEST(BoxLoss, PerfectMatchLeavesOnlyExistenceTerm) {
  world::AgentState ag;
  ag.x = 5;
  ag.y = -2;
  ag.heading = 0.3;
  const double big = 30.0;
  auto boxes = Tensor::matrix(2, 6, {5, -2, ag.length, ag.width, 0.3, big, 40, 40, 4, 2, 0, -big});
  auto r = box_loss(boxes, std::span(&ag, 1));
  ASSERT_EQ(r.matches.size(), 1u);
  EXPECT_LT(r.value.item(), 1e-12);
}

TEST(Composite, GradientIsWeightedSumOfTerms) {
  const auto gc = testing::small_grids();
  const auto sc = world::generate(5, world::Template::t_junction, gc);
  model::PieModel model(testing::toy_model(2));
  const auto bank = testing::line_bank();
  const auto teacher = teacher_anchor(bank, sc);
  const LossWeights w{0.7, 0.3};
  auto& store = model.params();

  auto grads = [&](const std::function<Tensor(const LossParts&)>& pick) {
    store.zero_grad();
    auto parts = compute_parts(model.forward(sc, bank, nullptr, teacher), sc);
    backward(pick(parts));
    std::vector<double> g;
    for (const auto& name : store.names()) {
      auto t = store.get(name);
      for (std::size_t i = 0; i < t.size(); ++i) g.push_back(t.has_grad() ? t.grad()[i] : 0.0);
    }
    return g;
  };
  auto total = grads([&](const LossParts& p) { return total_loss(p, w); });
  auto plan = grads([](const LossParts& p) { return p.planning; });
  auto vel = grads([](const LossParts& p) { return p.velocity; });
  auto act = grads([](const LossParts& p) { return p.action; });
  ASSERT_EQ(total.size(), plan.size());
  for (std::size_t i = 0; i < total.size(); ++i) EXPECT_NEAR(total[i], plan[i] + w.lambda_v * vel[i] + w.lambda_a * act[i], 1e-12);
}

TEST(TeacherAnchor, NearestInCommandClass) {
  const auto bank = testing::line_bank();
  world::Scenario sc;
  sc.command = Command::right;
  sc.expert = bank.of(Command::right)[7];
  auto t = teacher_anchor(bank, sc);
  EXPECT_EQ(t.cls, Command::right);
  EXPECT_EQ(t.index, 7u);
  sc.command = Command::unknown;
  sc.expert = bank.of(Command::left)[12];
  t = teacher_anchor(bank, sc);
  EXPECT_EQ(t.cls, Command::left);
  EXPECT_EQ(t.index, 12u);
}

}  // namespace
}  // namespace pie::loss
