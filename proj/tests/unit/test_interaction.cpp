#include <gtest/gtest.h>

#include "pie/interaction.hpp"
#include "pie/ops.hpp"

namespace pie::interaction {
namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::matrix(r, c, v, grad);
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void nudge(Tensor t, double by) {
  for (auto& v : t.mutable_data()) v += by;
}

TEST(Interaction, SingleKeyFirstPass) {
  ParameterStore store(1);
  auto p = InteractionParams::create(store, "ami", 8, 2, Mode::shared);
  Rng rng(2);
  InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), Tensor::zeros({0, 8})};
  auto out = interact(p, in);
  auto expect = p.norm_first(ops::add(in.trajectory, p.first.output(p.first.value(in.action))));
  auto a = vals(out), b = vals(expect);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Interaction, SharedModeAliasesStorage) {
  ParameterStore store(3);
  auto p = InteractionParams::create(store, "ami", 8, 2, Mode::shared);
  EXPECT_EQ(p.first.query.weight.impl(), p.second.query.weight.impl());
  EXPECT_EQ(p.first.output.bias.impl(), p.second.output.bias.impl());
}

TEST(Interaction, PerturbationStructure) {
  Rng rng(4);
  InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), random_matrix(rng, 3, 8)};

  ParameterStore shared_store(5);
  auto shared = InteractionParams::create(shared_store, "ami", 8, 2, Mode::shared);
  Tensor pass1 = shared.norm_first(
      ops::add(in.trajectory, attention::attend(shared.first, in.trajectory, in.action, in.action)));
  auto before_pass1 = vals(pass1);
  auto before = vals(interact(shared, in));
  nudge(shared.second.value.weight, 0.05);
  auto after_pass1 = vals(shared.norm_first(
      ops::add(in.trajectory, attention::attend(shared.first, in.trajectory, in.action, in.action))));
  EXPECT_NE(before_pass1, after_pass1);
  EXPECT_NE(before, vals(interact(shared, in)));

  ParameterStore un_store(5);
  auto un = InteractionParams::create(un_store, "ami", 8, 2, Mode::unshared);
  auto pass1_un = [&] {
    return vals(un.norm_first(ops::add(in.trajectory, attention::attend(un.first, in.trajectory, in.action, in.action))));
  };
  auto p1 = pass1_un();
  auto full = vals(interact(un, in));
  nudge(un.second.value.weight, 0.05);
  EXPECT_EQ(p1, pass1_un());
  EXPECT_NE(full, vals(interact(un, in)));
}

std::vector<double> loop_attend(const attention::AttentionParams& p, const std::vector<double>& q,
                                const Tensor& kv) {
  const std::size_t D = p.model_dim(), hd = p.head_dim, n = kv.dim(0);
  auto Q = p.query(Tensor::matrix(1, D, q));
  auto K = p.key(kv), V = p.value(kv);
  std::vector<double> merged(D, 0.0);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    std::vector<double> s(n);
    double m = -1e300, z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < hd; ++d) dot += Q[h * hd + d] * K.at(j, h * hd + d);
      s[j] = dot / std::sqrt(double(hd));
      m = std::max(m, s[j]);
    }
    for (auto& x : s) z += (x = std::exp(x - m));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < hd; ++d) merged[h * hd + d] += s[j] / z * V.at(j, h * hd + d);
  }
  return vals(p.output(Tensor::matrix(1, D, merged)));
}

std::vector<double> loop_norm(const LayerNormParams& ln, std::vector<double> x) {
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v / double(x.size());
  for (double v : x) var += (v - mean) * (v - mean) / double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = (x[i] - mean) / std::sqrt(var + ops::kLayerNormEps) * ln.gain[i] + ln.bias[i];
  return x;
}

TEST(Interaction, MatchesLoopOracle) {
  for (auto mode : {Mode::shared, Mode::unshared}) {
    ParameterStore store(6);
    auto p = InteractionParams::create(store, "ami", 8, 2, mode);
    for (const auto& name : store.names()) {
      if (name.find("norm") == std::string::npos) continue;
      Rng jitter(std::hash<std::string>{}(name));
      for (auto& v : store.get(name).mutable_data()) v += jitter.uniform(-0.3, 0.3);
    }
    Rng rng(7);
    InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), random_matrix(rng, 3, 8)};
    auto traj = vals(in.trajectory);
    auto a1 = loop_attend(p.first, traj, in.action);
    for (std::size_t d = 0; d < 8; ++d) a1[d] += traj[d];
    auto r1 = loop_norm(p.norm_first, a1);
    auto a2 = loop_attend(p.second, r1, in.motion);
    for (std::size_t d = 0; d < 8; ++d) a2[d] += r1[d];
    auto expect = loop_norm(p.norm_second, a2);
    auto got = vals(interact(p, in));
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(got[d], expect[d], 1e-12);
  }
}

TEST(Interaction, ZeroAgentsReturnsFirstPass) {
  ParameterStore store(8);
  auto p = InteractionParams::create(store, "ami", 8, 2, Mode::shared);
  Rng rng(9);
  InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), Tensor::zeros({0, 8})};
  auto expect = p.norm_first(ops::add(in.trajectory, attention::attend(p.first, in.trajectory, in.action, in.action)));
  EXPECT_EQ(vals(interact(p, in)), vals(expect));
}

TEST(Interaction, ParameterCensus) {
  ParameterStore shared_store(10), un_store(10), off_store(10);
  InteractionParams::create(shared_store, "ami", 8, 2, Mode::shared);
  InteractionParams::create(un_store, "ami", 8, 2, Mode::unshared);
  InteractionParams::create(off_store, "ami", 8, 2, Mode::off);
  const std::size_t one_set = 4 * (8 * 8 + 8);
  EXPECT_LT(shared_store.total_elements(), un_store.total_elements());
  EXPECT_EQ(un_store.total_elements() - shared_store.total_elements(), one_set);
  EXPECT_EQ(off_store.total_elements(), 0u);
}

TEST(Interaction, OffPassesThrough) {
  InteractionParams p;
  p.mode = Mode::off;
  Rng rng(11);
  InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), random_matrix(rng, 2, 8)};
  EXPECT_EQ(vals(interact(p, in)), vals(in.trajectory));
}

TEST(Interaction, GradientsReachActionAndMotion) {
  ParameterStore store(12);
  auto p = InteractionParams::create(store, "ami", 8, 2, Mode::shared);
  Rng rng(13);
  InteractionInput in{random_matrix(rng, 1, 8, true), random_matrix(rng, 1, 8, true), random_matrix(rng, 3, 8, true)};
  auto w = random_matrix(rng, 1, 8);
  backward(ops::sum(ops::mul(interact(p, in), w)));
  auto nonzero = [](const Tensor& t) {
    return t.has_grad() && std::any_of(t.grad().begin(), t.grad().end(), [](double g) { return g != 0.0; });
  };
  EXPECT_TRUE(nonzero(in.action));
  EXPECT_TRUE(nonzero(in.motion));
  EXPECT_TRUE(nonzero(in.trajectory));
}

TEST(Interaction, AgentPermutationInvariance) {
  ParameterStore store(14);
  auto p = InteractionParams::create(store, "ami", 8, 2, Mode::unshared);
  Rng rng(15);
  InteractionInput in{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8), random_matrix(rng, 5, 8)};
  auto base = vals(interact(p, in));
  InteractionInput permuted = in;
  permuted.motion = ops::embedding_lookup(in.motion, {3, 1, 4, 0, 2});
  auto got = vals(interact(p, permuted));
  for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(got[d], base[d], 1e-13);
}

}  // namespace
}  // namespace pie::interaction
