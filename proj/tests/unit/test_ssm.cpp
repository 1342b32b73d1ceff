#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pie/grad_check.hpp"
#include "pie/ops.hpp"
#include "pie/ssm.hpp"

namespace pie::ssm {
namespace {

SequenceParams random_params(Rng& rng, std::size_t L, std::size_t N) {
  std::vector<double> a(L), b(L * N), c(L * N);
  for (auto& v : a) v = rng.uniform(0.05, 1.0);
  for (auto& v : b) v = rng.normal();
  for (auto& v : c) v = rng.normal();
  return {Tensor::vector(a), Tensor::matrix(L, N, b), Tensor::matrix(L, N, c)};
}

Tensor random_x(Rng& rng, std::size_t L) {
  std::vector<double> x(L);
  for (auto& v : x) v = rng.normal();
  return Tensor::vector(x);
}

TEST(Ssm, SingleStep) {
  SequenceParams p{Tensor::vector({0.3}), Tensor::matrix(1, 2, {1.5, -2.0}), Tensor::matrix(1, 2, {0.5, 0.25})};
  auto y = scan(p, Tensor::vector({4.0}));
  EXPECT_DOUBLE_EQ(y[0], (1.5 * 0.5 - 2.0 * 0.25) * 4.0);
}

TEST(Ssm, UnitDecayIsPrefixSum) {
  const std::size_t L = 6;
  SequenceParams p{Tensor::full({L}, 1.0), Tensor::full({L, 1}, 1.0), Tensor::full({L, 1}, 1.0)};
  auto x = Tensor::vector({1, -2, 3, 0.5, 7, -1});
  auto y = scan(p, x);
  double acc = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    acc += x[t];
    EXPECT_DOUBLE_EQ(y[t], acc);
  }
}

TEST(Ssm, ScanMatchesMaterializedMatrix) {
  Rng rng(8);
  auto p = random_params(rng, 8, 4);
  auto x = random_x(rng, 8);
  auto y = scan(p, x);
  auto mx = ops::matmul(materialize(p), ops::reshape(x, {8, 1}));
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(y[t], mx[t], 1e-10);
}

TEST(Ssm, OracleEquivalenceSweep) {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto L = std::size_t(rng.integer(1, 32));
    const auto N = std::size_t(rng.integer(1, 8));
    auto p = random_params(rng, L, N);
    auto x = random_x(rng, L);
    auto y = scan(p, x);
    auto mx = ops::matmul(materialize(p), ops::reshape(x, {L, 1}));
    for (std::size_t t = 0; t < L; ++t) worst = std::max(worst, std::abs(y[t] - mx[t]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Ssm, GeometricTransferMatrix) {
  const std::size_t L = 5;
  auto m = materialize({Tensor::full({L}, 0.5), Tensor::full({L, 1}, 1.0), Tensor::full({L, 1}, 1.0)});
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t i = 0; i < L; ++i) EXPECT_DOUBLE_EQ(m.at(j, i), i <= j ? std::pow(0.5, double(j - i)) : 0.0);
}

TEST(Ssm, DiagonalMaterializationAgreesForScalarDecay) {
  Rng rng(4);
  auto p = random_params(rng, 7, 3);
  std::vector<double> diag(7 * 3);
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t n = 0; n < 3; ++n) diag[t * 3 + n] = p.decay[t];
  auto a = materialize(p);
  auto b = materialize_diagonal(Tensor::matrix(7, 3, diag), p.b, p.c);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Ssm, MatrixIsLowerTriangular) {
  Rng rng(12);
  auto m = materialize(random_params(rng, 9, 4));
  for (std::size_t j = 0; j < 9; ++j)
    for (std::size_t i = j + 1; i < 9; ++i) EXPECT_EQ(m.at(j, i), 0.0);
}

TEST(Ssm, Causality) {
  Rng rng(21);
  auto p = random_params(rng, 12, 4);
  auto x = random_x(rng, 12);
  auto base = scan(p, x);
  for (std::size_t t = 0; t < 12; ++t) {
    std::vector<double> xs(x.data().begin(), x.data().end());
    xs[t] += 3.7;
    auto y = scan(p, Tensor::vector(xs));
    for (std::size_t s = 0; s < t; ++s) EXPECT_EQ(y[s], base[s]);
  }
}

TEST(Ssm, DecayMonotonicity) {
  Rng rng(30);
  auto p = random_params(rng, 10, 3);
  std::vector<double> smaller(p.decay.data().begin(), p.decay.data().end());
  for (auto& a : smaller) a *= rng.uniform(0.2, 0.99);
  auto hi = materialize(p);
  auto lo = materialize({Tensor::vector(smaller), p.b, p.c});
  for (std::size_t j = 0; j < 10; ++j)
    for (std::size_t i = 0; i < j; ++i) EXPECT_LE(std::abs(lo.at(j, i)), std::abs(hi.at(j, i)));
}

TEST(Ssm, EmptySequenceAndRejections) {
  SequenceParams empty{Tensor::zeros({0}), Tensor::zeros({0, 2}), Tensor::zeros({0, 2})};
  EXPECT_EQ(scan(empty, Tensor::zeros({0})).size(), 0u);
  SequenceParams p{Tensor::vector({0.5, 0.5}), Tensor::full({2, 1}, 1.0), Tensor::full({2, 1}, 1.0)};
  EXPECT_THROW(scan(p, Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()})), std::domain_error);
  EXPECT_THROW(scan(p, Tensor::vector({1.0, 2.0, 3.0})), ShapeError);
  SequenceParams bad{Tensor::vector({0.5, 1.5}), Tensor::full({2, 1}, 1.0), Tensor::full({2, 1}, 1.0)};
  EXPECT_THROW(scan(bad, Tensor::vector({1.0, 2.0})), std::invalid_argument);
}

TEST(Ssm, MultiChannelScanSharesParameters) {
  Rng rng(3);
  auto p = random_params(rng, 6, 2);
  auto x0 = random_x(rng, 6), x1 = random_x(rng, 6);
  std::vector<double> both(12);
  for (std::size_t t = 0; t < 6; ++t) {
    both[t * 2] = x0[t];
    both[t * 2 + 1] = x1[t];
  }
  auto y = scan(p, Tensor::matrix(6, 2, both));
  auto y0 = scan(p, x0), y1 = scan(p, x1);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_NEAR(y.at(t, 0), y0[t], 1e-14);
    EXPECT_NEAR(y.at(t, 1), y1[t], 1e-14);
  }
}

TEST(MambaBlock, ShapeDeterminismAndCausality) {
  ParameterStore store(5);
  auto block = BlockParams::create(store, "blk", 6, 4);
  Rng rng(6);
  std::vector<double> xs(5 * 6);
  for (auto& v : xs) v = rng.normal();
  auto x = Tensor::matrix(5, 6, xs);
  auto y = block_forward(block, x);
  EXPECT_EQ(y.shape(), (Shape{5, 6}));
  auto again = block_forward(block, x);
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), again.data().begin()));
  xs[3 * 6 + 2] += 1.0;
  auto moved = block_forward(block, Tensor::matrix(5, 6, xs));
  for (std::size_t i = 0; i < 3 * 6; ++i) EXPECT_EQ(moved[i], y[i]);
  EXPECT_THROW(block_forward(block, Tensor::zeros({5, 4})), ShapeError);
}

TEST(MambaBlock, SelectedDecayInRange) {
  ParameterStore store(9);
  auto block = BlockParams::create(store, "blk", 8, 4);
  Rng rng(1);
  std::vector<double> xs(7 * 8);
  for (auto& v : xs) v = 3.0 * rng.normal();
  auto sel = select(block, Tensor::matrix(7, 8, xs));
  EXPECT_EQ(sel.b.shape(), (Shape{7, 4}));
  for (double a : sel.decay.data()) {
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(MambaBlock, GradCheck) {
  ParameterStore store(13);
  auto block = BlockParams::create(store, "blk", 6, 4);
  Rng rng(14);
  std::vector<double> xs(4 * 6);
  for (auto& v : xs) v = rng.normal();
  auto x = Tensor::matrix(4, 6, xs, true);
  auto f = [&] { return ops::sum(ops::mul(block_forward(block, x), block_forward(block, x))); };
  EXPECT_LT(grad_check(f, x).max_rel_error, 1e-5);
  for (const auto& name : store.names()) EXPECT_LT(grad_check(f, store.get(name)).max_rel_error, 1e-5) << name;
}

}  // namespace
}  // namespace pie::ssm
