#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pie/grad_check.hpp"
#include "pie/moe.hpp"
#include "pie/ops.hpp"

namespace pie::moe {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::matrix(r, c, v, grad);
}

TEST(TopK, Examples) {
  const std::vector<double> v = {1, 2, 3};
  EXPECT_EQ(top_k_mask(v, 3), v);
  EXPECT_EQ(top_k_mask(v, 2), (std::vector<double>{kNegInf, 2, 3}));
  const std::vector<double> tie = {5, 5, 1};
  EXPECT_EQ(top_k_mask(tie, 1), (std::vector<double>{5, kNegInf, kNegInf}));
  EXPECT_THROW(top_k_mask(v, 0), std::invalid_argument);
  EXPECT_THROW(top_k_mask(v, 4), std::invalid_argument);
}

TEST(TopK, TieRuleExhaustive) {
  // Every vector over {0, 1} of length 4: the kept entries are the k lowest
  // indices among the maxima first.
  for (int bits = 0; bits < 16; ++bits) {
    std::vector<double> v(4);
    for (int i = 0; i < 4; ++i) v[i] = (bits >> i) & 1;
    for (std::size_t k = 1; k <= 4; ++k) {
      auto m = top_k_mask(v, k);
      std::vector<std::size_t> expect;
      for (double level : {1.0, 0.0})
        for (std::size_t i = 0; i < 4; ++i)
          if (v[i] == level && expect.size() < k) expect.push_back(i);
      for (std::size_t i = 0; i < 4; ++i) {
        bool kept = std::find(expect.begin(), expect.end(), i) != expect.end();
        EXPECT_EQ(m[i], kept ? v[i] : kNegInf) << bits << " k=" << k;
      }
    }
  }
}

TEST(Gate, ClosedFormWeights) {
  const std::vector<double> logits = {1, 2, 3};
  auto d = gate_logits(0, logits, 2);
  EXPECT_NEAR(d.weight_of(2), std::exp(3.0) / (std::exp(2.0) + std::exp(3.0)), 1e-15);
  EXPECT_NEAR(d.weight_of(2), 0.73106, 1e-5);
  EXPECT_NEAR(d.weight_of(1), 0.26894, 1e-5);
  EXPECT_EQ(d.weight_of(0), 0.0);
}

TEST(Gate, EqualLogitsTieBreak) {
  const std::vector<double> logits = {0.7, 0.7, 0.7};
  auto d = gate_logits(0, logits, 2);
  EXPECT_EQ(d.experts, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(d.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(d.weights[1], 0.5);
}

TEST(Gate, SingleExpert) {
  const std::vector<double> logits = {0.1, -3.0, 2.0};
  auto d = gate_logits(0, logits, 1);
  ASSERT_EQ(d.experts.size(), 1u);
  EXPECT_EQ(d.experts[0], 2u);
  EXPECT_EQ(d.weights[0], 1.0);
}

TEST(Gate, FromFeatureAndWeights) {
  auto w = Tensor::matrix(2, 3, {1, 0, 1, 0, 1, 1});
  const std::vector<double> x = {1.0, 2.0};  // logits [1, 2, 3]
  auto d = gate(x, w, 2, false, nullptr, 0.5);
  EXPECT_NEAR(d.weight_of(2), 0.7310585786300049, 1e-15);
  const std::vector<double> wrong = {1.0};
  EXPECT_THROW(gate(wrong, w, 2, false, nullptr, 0.0), ShapeError);
}

TEST(Gate, DropoutNeverDropsTheArgmax) {
  Rng rng(1);
  const std::vector<double> logits = {0.3, 2.0, 1.0, -1.0};
  std::size_t drops = 0;
  for (int i = 0; i < 2000; ++i) {
    auto d = gate_logits(0, logits, 3, &rng, 0.5);
    EXPECT_GT(d.weight_of(1), 0.0);
    EXPECT_NEAR(d.weight_sum(), 1.0, 1e-12);
    drops += d.dropped.size();
  }
  EXPECT_GT(drops, 1500u);
  EXPECT_LT(drops, 2500u);
}

TEST(Capacity, NoOverflowLeavesDecisionsUnchanged) {
  Rng rng(2);
  std::vector<GateDecision> ds;
  for (std::size_t t = 0; t < 5; ++t) {
    std::vector<double> l = {rng.normal(), rng.normal(), rng.normal()};
    ds.push_back(gate_logits(t, l, 2));
  }
  auto before = ds;
  apply_capacity(ds, 3, 5);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(ds[t].experts, before[t].experts);
    EXPECT_EQ(ds[t].weights, before[t].weights);
    EXPECT_TRUE(ds[t].redistributed.empty());
  }
}

TEST(Capacity, ThirdTokenOverflowMovesToSecondChoice) {
  std::vector<GateDecision> ds;
  const std::vector<std::vector<double>> logits = {{3, 1, 0}, {3, 0, 2}, {2, 0.5, 1}};
  for (std::size_t t = 0; t < 3; ++t) ds.push_back(gate_logits(t, logits[t], 2));
  auto before = ds;
  apply_capacity(ds, 3, 2);
  EXPECT_EQ(ds[0].weights, before[0].weights);
  EXPECT_EQ(ds[1].weights, before[1].weights);
  const auto& third = ds[2];
  EXPECT_EQ(third.weight_of(0), 0.0);
  EXPECT_NEAR(third.weight_of(2), 1.0, 1e-15);
  ASSERT_EQ(third.redistributed.size(), 1u);
  EXPECT_EQ(third.redistributed[0].from, 0u);
  EXPECT_EQ(third.redistributed[0].to, 2u);
  EXPECT_NEAR(third.redistributed[0].mass, before[2].weight_of(0), 1e-15);
  EXPECT_NEAR(third.weight_sum(), 1.0, 1e-12);
}

TEST(Capacity, RandomBatchesConserveMass) {
  Rng rng(3);
  for (int batch = 0; batch < 1000; ++batch) {
    const auto n = std::size_t(rng.integer(2, 6));
    const auto k = std::size_t(rng.integer(1, std::int64_t(n)));
    const auto L = std::size_t(rng.integer(1, 24));
    const auto cap = std::size_t(rng.integer(1, std::int64_t(L)));
    std::vector<GateDecision> ds;
    for (std::size_t t = 0; t < L; ++t) {
      std::vector<double> l(n);
      for (auto& v : l) v = rng.normal();
      ds.push_back(gate_logits(t, l, k, &rng, 0.1));
    }
    auto before = ds;
    apply_capacity(ds, n, cap);
    std::vector<std::size_t> load(n, 0);
    for (std::size_t t = 0; t < L; ++t) {
      const auto& d = ds[t];
      EXPECT_LE(d.experts.size(), k);
      if (d.experts.empty()) {
        EXPECT_FALSE(d.shed.empty());
      } else {
        EXPECT_NEAR(d.weight_sum(), 1.0, 1e-12);
      }
      // Every expert that lost mass either forwarded it or shed it.
      for (auto e : before[t].experts) {
        if (d.weight_of(e) > 0.0) continue;
        bool accounted = false;
        for (const auto& r : d.redistributed) accounted |= r.from == e;
        for (const auto& s : d.shed) accounted |= s.expert == e;
        EXPECT_TRUE(accounted);
      }
      for (auto e : d.experts) ++load[e];
    }
    for (std::size_t e = 0; e < n; ++e) EXPECT_LE(load[e], cap);
  }
}

MoeParams make_params(ParameterStore& store, std::size_t n, std::size_t D, std::size_t hidden) {
  return MoeParams::create(store, "moe", n, D, hidden);
}

TEST(MoeForward, SingleExpertIsThatExpert) {
  ParameterStore store(4);
  auto p = make_params(store, 1, 6, 12);
  Rng rng(5);
  auto x = random_matrix(rng, 4, 6);
  GateConfig cfg;
  cfg.k = 1;
  auto out = forward(p, x, cfg);
  auto e = p.experts.expert(0, x);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(out.y[i], e[i], 1e-15);
}

TEST(MoeForward, IdenticalExpertsDense) {
  ParameterStore store(6);
  auto p = make_params(store, 3, 6, 8);
  for (std::size_t e = 1; e < 3; ++e) {
    auto copy = [](const Tensor& from, Tensor to) {
      std::copy(from.data().begin(), from.data().end(), to.mutable_data().begin());
    };
    copy(p.experts.up[0].weight, p.experts.up[e].weight);
    copy(p.experts.up[0].bias, p.experts.up[e].bias);
    copy(p.experts.down[0].weight, p.experts.down[e].weight);
    copy(p.experts.down[0].bias, p.experts.down[e].bias);
  }
  Rng rng(7);
  auto x = random_matrix(rng, 5, 6);
  GateConfig cfg;
  cfg.k = 3;
  cfg.use_capacity = false;
  auto out = forward(p, x, cfg);
  auto e = p.experts.expert(0, x);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(out.y[i], e[i], 1e-12);
}

Tensor dense_mixture(const MoeParams& p, const Tensor& x, const std::vector<GateDecision>& ds) {
  const std::size_t L = x.dim(0), D = x.dim(1);
  std::vector<double> y(L * D, 0.0);
  for (std::size_t e = 0; e < p.experts.count(); ++e) {
    auto ex = p.experts.expert(e, x);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) y[t * D + d] += ds[t].weight_of(e) * ex[t * D + d];
  }
  return Tensor::matrix(L, D, y);
}

TEST(MoeForward, MatchesDenseOracle) {
  ParameterStore store(8);
  auto p = make_params(store, 3, 6, 12);
  Rng rng(9);
  auto x = random_matrix(rng, 4, 6);
  GateConfig cfg;
  cfg.k = 2;
  auto out = forward(p, x, cfg);
  auto ref = dense_mixture(p, x, out.decisions);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.y[i], ref[i], 1e-12);
  for (const auto& d : out.decisions) {
    EXPECT_GE(d.experts.size(), 1u);
    EXPECT_LE(d.experts.size(), 2u);
  }
}

TEST(MoeForward, KEqualsNIsDenseSoftmaxMixture) {
  ParameterStore store(10);
  auto p = make_params(store, 4, 6, 8);
  Rng rng(11);
  auto x = random_matrix(rng, 5, 6);
  GateConfig cfg;
  cfg.k = 4;
  cfg.use_capacity = false;
  auto out = forward(p, x, cfg);
  auto g = ops::softmax(ops::matmul(x, p.w_gate), 1);
  std::vector<double> y(5 * 6, 0.0);
  for (std::size_t e = 0; e < 4; ++e) {
    auto ex = p.experts.expert(e, x);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t d = 0; d < 6; ++d) y[t * 6 + d] += g.at(t, e) * ex[t * 6 + d];
  }
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(out.y[i], y[i], 1e-12);
}

TEST(MoeForward, RejectsBadK) {
  ParameterStore store(12);
  auto p = make_params(store, 3, 4, 8);
  GateConfig cfg;
  cfg.k = 4;
  EXPECT_THROW(forward(p, Tensor::zeros({2, 4}), cfg), std::invalid_argument);
}

TEST(MoeForward, GradCheckWithFrozenSelection) {
  ParameterStore store(13);
  auto p = make_params(store, 3, 6, 8);
  Rng rng(14);
  auto x = random_matrix(rng, 4, 6, true);
  GateConfig cfg;
  cfg.k = 2;
  auto f = [&] {
    auto y = forward(p, x, cfg).y;
    return ops::sum(ops::mul(y, y));
  };
  EXPECT_LT(grad_check(f, x).max_rel_error, 1e-5);
  EXPECT_LT(grad_check(f, p.w_gate).max_rel_error, 1e-5);
  EXPECT_LT(grad_check(f, p.experts.up[1].weight).max_rel_error, 1e-5);
}

}  // namespace
}  // namespace pie::moe
