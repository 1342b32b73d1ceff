#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "pie/grad_check.hpp"
#include "pie/ops.hpp"
#include "pie/params.hpp"
#include "fixtures.hpp"

namespace pie {
namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), grad);
}

TEST(Tensor, MatmulIdentity) {
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(values(ops::matmul(a, eye)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, SoftmaxOfZerosIsUniform) {
  auto s = ops::softmax(Tensor::vector({0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Tensor, SoftmaxRejectsEmptyAxis) {
  EXPECT_THROW(ops::softmax(Tensor::zeros({0}), 0), std::invalid_argument);
}

TEST(Tensor, ConcatShape) {
  auto c = ops::concat({Tensor::zeros({2, 3}), Tensor::zeros({4, 3})}, 0);
  EXPECT_EQ(c.shape(), (Shape{6, 3}));
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
  }
  EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({4})), ShapeError);
}

TEST(Tensor, GradOfSumOfSquares) {
  auto x = Tensor::vector({1, 2, 3}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Tensor, GradOfMeanAbs) {
  auto x = Tensor::vector({-1, 2}, true);
  backward(ops::mean(ops::abs(x)));
  EXPECT_NEAR(x.grad()[0], -0.5, 1e-12);
  EXPECT_NEAR(x.grad()[1], 0.5, 1e-12);
  auto r = grad_check([](const Tensor& v) { return ops::mean(ops::abs(v)); }, Tensor::vector({-1, 2}, true));
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Tensor, BackwardRejectsNonScalarRoot) {
  auto x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), ShapeError);
}

TEST(Tensor, SharedParameterGradientsAccumulate) {
  ParameterStore store(3);
  auto w1 = store.get_or_create("shared", {2, 2}, Init::uniform_fan_in, 2);
  auto w2 = store.get_or_create("shared", {2, 2}, Init::uniform_fan_in, 2);
  ASSERT_EQ(w1.impl(), w2.impl());
  auto x = Tensor::matrix(1, 2, {0.3, -0.7});
  auto f = [&] { return ops::sum(ops::silu(ops::matmul(ops::matmul(x, w1), w2))); };

  auto path = [&](bool first) {
    // Gradient through one use with the other use frozen.
    auto frozen = w1.detach();
    store.zero_grad();
    auto y = first ? ops::matmul(ops::matmul(x, w1), frozen) : ops::matmul(ops::matmul(x, frozen), w2);
    backward(ops::sum(ops::silu(y)));
    return std::vector<double>(w1.grad().begin(), w1.grad().end());
  };
  auto g1 = path(true);
  auto g2 = path(false);
  store.zero_grad();
  backward(f());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w1.grad()[i], g1[i] + g2[i], 1e-12);
  EXPECT_LT(grad_check(f, w1).max_rel_error, 1e-6);
}

TEST(Tensor, ConsumerFanOutSumsSinglePathGradients) {
  auto x = Tensor::vector({0.5, -1.5, 2.0}, true);
  backward(ops::sum(ops::add(ops::exp(x), ops::mul(x, x))));
  for (std::size_t i = 0; i < 3; ++i) {
    const double v = x.data()[i];
    EXPECT_NEAR(x.grad()[i], std::exp(v) + 2 * v, 1e-12);
  }
}

TEST(Tensor, SoftmaxSumHasZeroGradient) {
  Rng rng(5);
  auto x = random_tensor(rng, {7});
  backward(ops::sum(ops::softmax(x, 0)));
  for (double g : x.grad()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Tensor, SiluGradCheck) {
  Rng rng(11);
  auto r = grad_check([](const Tensor& v) { return ops::sum(ops::silu(v)); }, random_tensor(rng, {3, 4}));
  EXPECT_LT(r.max_rel_error, 1e-6);
}

// Every primitive against central differences at 100 random points each.
TEST(Tensor, PrimitivesMatchFiniteDifferences) {
  Rng rng(2024);
  using F = std::function<Tensor(const Tensor&)>;
  const auto other = random_tensor(rng, {3, 4}, false);
  const auto positive = [](const Tensor& v) { return ops::add_scalar(ops::exp(v), 0.5); };
  std::vector<std::pair<const char*, F>> cases = {
      {"matmul", [&](const Tensor& v) { return ops::sum(ops::matmul(v, ops::transpose(other))); }},
      {"add", [&](const Tensor& v) { return ops::sum(ops::mul(ops::add(v, other), other)); }},
      {"mul", [&](const Tensor& v) { return ops::sum(ops::mul(v, other)); }},
      {"div", [&](const Tensor& v) { return ops::sum(ops::div(other, positive(v))); }},
      {"concat", [&](const Tensor& v) { return ops::sum(ops::mul(ops::concat({v, other}, 0), ops::concat({other, v}, 0))); }},
      {"split", [&](const Tensor& v) {
         auto parts = ops::split(v, 1, {1, 3});
         return ops::sum(ops::mul(parts[1], parts[1]));
       }},
      {"softmax", [&](const Tensor& v) { return ops::sum(ops::mul(ops::softmax(v, 1), other)); }},
      {"log_softmax", [&](const Tensor& v) { return ops::sum(ops::mul(ops::log_softmax(v, 0), other)); }},
      {"silu", [&](const Tensor& v) { return ops::sum(ops::mul(ops::silu(v), other)); }},
      {"softplus", [&](const Tensor& v) { return ops::sum(ops::mul(ops::softplus(v), other)); }},
      {"sigmoid", [&](const Tensor& v) { return ops::sum(ops::mul(ops::sigmoid(v), other)); }},
      {"layer_norm", [&](const Tensor& v) {
         return ops::sum(ops::mul(ops::layer_norm(v, Tensor::vector({1.0, 0.5, 2.0, -1.0}), Tensor::vector({0, 0.1, 0, 0})), other));
       }},
      {"transpose", [&](const Tensor& v) { return ops::sum(ops::matmul(ops::transpose(v), other)); }},
      {"mean", [&](const Tensor& v) { return ops::mean(ops::mul(v, v)); }},
      {"abs", [&](const Tensor& v) { return ops::sum(ops::mul(ops::abs(v), other)); }},
      {"exp", [&](const Tensor& v) { return ops::sum(ops::mul(ops::exp(v), other)); }},
      {"log", [&](const Tensor& v) { return ops::sum(ops::mul(ops::log(positive(v)), other)); }},
      {"cos", [&](const Tensor& v) { return ops::sum(ops::mul(ops::cos(v), other)); }},
      {"gather", [&](const Tensor& v) { return ops::sum(ops::mul(ops::gather(v, {0, 5, 5, 11}), ops::gather(other, {1, 2, 3, 4}))); }},
      {"scatter_add", [&](const Tensor& v) {
         auto s = ops::scatter_add(ops::reshape(v, {12}), {0, 1, 1, 2, 0, 3, 3, 3, 4, 5, 4, 0}, 6);
         return ops::sum(ops::mul(s, s));
       }},
      {"embedding_lookup", [&](const Tensor& v) {
         auto e = ops::embedding_lookup(v, {2, 0, 2});
         return ops::sum(ops::mul(e, e));
       }},
      {"reshape", [&](const Tensor& v) { return ops::sum(ops::mul(ops::reshape(v, {4, 3}), ops::reshape(other, {4, 3}))); }},
  };
  for (const auto& [name, f] : cases) {
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
      auto r = grad_check(f, random_tensor(rng, {3, 4}));
      ASSERT_TRUE(r.finite) << name;
      worst = std::max(worst, r.max_rel_error);
    }
    EXPECT_LT(worst, 1e-6) << name;
  }
}

TEST(Tensor, ForwardIsBitIdentical) {
  Rng rng(9);
  auto x = random_tensor(rng, {4, 5}, false);
  auto w = random_tensor(rng, {5, 3}, false);
  auto f = [&] { return ops::softmax(ops::layer_norm(ops::matmul(x, w), Tensor::full({3}, 1.0), Tensor::zeros({3})), 1); };
  EXPECT_EQ(values(f()), values(f()));
}

TEST(Tensor, CheckpointRoundTripIsBitExact) {
  ParameterStore store(42);
  store.get_or_create("a.weight", {3, 5}, Init::uniform_fan_in, 3);
  store.get_or_create("b.query", {2, 4}, Init::normal_small);
  auto path = pie::testing::scratch("ckpt.bin");
  save_checkpoint(path, snapshot(store, 0xabcdefULL));
  auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config_hash, 0xabcdefULL);
  ParameterStore other(7);
  other.get_or_create("a.weight", {3, 5}, Init::uniform_fan_in, 3);
  other.get_or_create("b.query", {2, 4}, Init::normal_small);
  restore(other, loaded);
  for (const auto& name : store.names()) {
    auto a = store.get(name).data();
    auto b = other.get(name).data();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << name;
  }
  std::filesystem::remove(path);
}

TEST(Tensor, TruncatedCheckpointIsRejected) {
  ParameterStore store(1);
  store.get_or_create("w", {4, 4}, Init::uniform_fan_in, 4);
  auto path = pie::testing::scratch("trunc.bin");
  save_checkpoint(path, snapshot(store, 1));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace pie
