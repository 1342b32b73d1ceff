#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fixtures.hpp"
#include "pie/losses.hpp"
#include "pie/ops.hpp"
#include "pie/train.hpp"

namespace pie::train {
namespace {

std::vector<world::Scenario> scenarios(std::size_t n, std::uint64_t first = 0) {
  std::vector<world::Scenario> out;
  for (std::uint64_t s = first; s < first + n; ++s) out.push_back(world::generate(s, testing::small_grids()));
  return out;
}

std::vector<std::vector<double>> weights(const ParameterStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& name : store.names()) {
    auto d = store.get(name).data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

TEST(AdamW, MatchesUpdateEquations) {
  ParameterStore store(1);
  auto w = store.get_or_create("w", {3}, Init::constant, 1, 0.5);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.2;
  AdamW opt(store, cfg);
  const std::vector<double> g = {1.0, -2.0, 0.0};
  std::vector<double> m(3, 0.0), v(3, 0.0), theta(3, 0.5);
  for (int step = 1; step <= 3; ++step) {
    std::copy(g.begin(), g.end(), w.impl()->ensure_grad().begin());
    opt.step();
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      theta[i] -= 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.2 * theta[i]);
      EXPECT_NEAR(w.data()[i], theta[i], 1e-14);
    }
  }
  EXPECT_THROW(AdamW(store, AdamWConfig{-1.0}), std::invalid_argument);
}

TEST(ClipGradNorm, ScalesToMaximum) {
  ParameterStore store(2);
  auto w = store.get_or_create("w", {2}, Init::zeros);
  auto& g = w.impl()->ensure_grad();
  g = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 1.0), 5.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-15);
}

TEST(Train, ZeroLearningRateKeepsParametersBitIdentical) {
  model::PieModel model(testing::toy_model(3));
  const auto bank = testing::line_bank();
  auto data = scenarios(6);
  auto before = weights(model.params());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.optimizer.lr = 0.0;
  cfg.optimizer.weight_decay = 0.0;
  train(model, bank, data, {}, cfg);
  EXPECT_EQ(weights(model.params()), before);
}

TEST(Train, IdenticalSeedsGiveIdenticalCurves) {
  const auto bank = testing::line_bank();
  auto data = scenarios(8);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.optimizer.lr = 1e-3;
  cfg.seed = 11;
  auto run = [&] {
    model::PieModel model(testing::toy_model(4));
    auto log = train(model, bank, data, {}, cfg);
    std::vector<double> curve;
    for (const auto& r : log) curve.push_back(r.train_loss);
    return std::pair{curve, weights(model.params())};
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, SingleSampleOverfit) {
  model::PieModel model(testing::toy_model(5));
  const auto bank = testing::line_bank();
  auto data = scenarios(1, 21);
  const double initial = evaluate_loss(model, bank, data[0]).planning.item();
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.optimizer.lr = 3e-3;
  cfg.optimizer.weight_decay = 0.0;
  train(model, bank, data, {}, cfg);
  const double final = evaluate_loss(model, bank, data[0]).planning.item();
  EXPECT_LT(final, 0.01 * initial) << "initial " << initial << ", final " << final;
}

TEST(Train, MetricsAndCheckpointPerEpoch) {
  model::PieModel model(testing::toy_model(6));
  const auto bank = testing::line_bank();
  auto data = scenarios(4);
  auto val = scenarios(2, 50);
  auto path = pie::testing::scratch("train.ckpt");
  std::vector<EpochRecord> seen;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.val_every = 2;
  train(model, bank, data, val, cfg, {[&](const EpochRecord& r) { seen.push_back(r); }, path});
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_FALSE(seen[0].val_pdms.has_value());
  EXPECT_TRUE(seen[1].val_pdms.has_value());
  EXPECT_TRUE(seen[2].val_pdms.has_value());
  EXPECT_NE(to_json_line(seen[0]).find("\"val_pdms\":null"), std::string::npos);
  auto ckpt = load_checkpoint(path);
  EXPECT_EQ(ckpt.config_hash, model.config().hash());
  model::PieModel fresh(testing::toy_model(99));
  restore(fresh.params(), ckpt);
  EXPECT_EQ(weights(fresh.params()), weights(model.params()));
  std::filesystem::remove(path);
}

TEST(Train, RejectsEmptyInputs) {
  model::PieModel model(testing::toy_model(7));
  const auto bank = testing::line_bank();
  EXPECT_THROW(train(model, bank, {}, {}, TrainConfig{}), std::invalid_argument);
}

TEST(Model, ForwardShapesAndDeterminism) {
  auto mc = testing::toy_model(8);
  model::PieModel model(mc);
  const auto bank = testing::line_bank();
  auto sc = world::generate(3, world::Template::left_turn, testing::small_grids());
  auto out = model.forward(sc, bank);
  EXPECT_EQ(out.trajectory.shape(), (Shape{8, 3}));
  EXPECT_EQ(out.boxes.shape(), (Shape{2, 6}));
  EXPECT_EQ(out.velocities.shape(), (Shape{2, 2}));
  EXPECT_EQ(out.action_logits.shape(), (Shape{3}));
  EXPECT_EQ(out.anchor_scores.shape(), (Shape{20}));
  EXPECT_EQ(model.plan(sc, bank), model.plan(sc, bank));
  EXPECT_EQ(model.encode(sc).dim(0), 2u * 4u + 2u * 2u + 1u);
}

TEST(Model, GridMismatchRejected) {
  model::PieModel model(testing::toy_model(9));
  auto sc = world::generate(3, world::Template::straight_road);  // default grids
  EXPECT_THROW(model.forward(sc, testing::line_bank()), ShapeError);
}

TEST(Model, InteractionRoutesTrajectoryLossThroughActionFeature) {
  const auto bank = testing::line_bank();
  auto sc = world::generate(4, world::Template::t_junction, testing::small_grids());
  auto action_grad = [&](interaction::Mode mode) {
    auto mc = testing::toy_model(10);
    mc.interaction = mode;
    model::PieModel model(mc);
    auto out = model.forward(sc, bank, nullptr, loss::teacher_anchor(bank, sc));
    backward(loss::trajectory_loss(out.trajectory, sc.expert));
    auto w = model.params().get("heads.action_proj.weight");
    double s = 0.0;
    if (w.has_grad())
      for (double g : w.grad()) s += std::abs(g);
    return s;
  };
  EXPECT_EQ(action_grad(interaction::Mode::off), 0.0);
  EXPECT_GT(action_grad(interaction::Mode::shared), 0.0);
}

TEST(Model, ConfigHashTracksFields) {
  auto a = testing::toy_model(1);
  auto b = a;
  EXPECT_EQ(a.hash(), b.hash());
  b.decoder.n_experts = 4;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(model::ModelConfig{}.fusion_layers, 2u);
  EXPECT_EQ(model::ModelConfig{}.decoder.n_layers, 2u);
  EXPECT_EQ(model::ModelConfig{}.decoder.n_experts, 3u);
  EXPECT_EQ(model::ModelConfig{}.decoder.gate.k, 2u);
}

}  // namespace
}  // namespace pie::train
