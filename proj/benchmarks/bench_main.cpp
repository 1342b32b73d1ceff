#include <benchmark/benchmark.h>

#include "pie/anchors.hpp"
#include "pie/attention.hpp"
#include "pie/generator.hpp"
#include "pie/model.hpp"
#include "pie/ops.hpp"
#include "pie/pdm.hpp"
#include "pie/ssm.hpp"

using namespace pie;

namespace {

Tensor random_tensor(Rng& rng, const Shape& s, double lo, double hi) {
  std::vector<double> v(numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(s, std::move(v));
}

ssm::SequenceParams random_sequence(Rng& rng, std::size_t L, std::size_t N) {
  return {random_tensor(rng, {L}, 0.5, 0.99), random_tensor(rng, {L, N}, -1, 1), random_tensor(rng, {L, N}, -1, 1)};
}

anchors::AnchorBank line_bank() {
  anchors::AnchorBank bank;
  for (auto& cls : bank.classes)
    for (std::size_t i = 0; i < anchors::kAnchorsPerClass; ++i) {
      Trajectory t;
      for (std::size_t k = 0; k < kWaypoints; ++k) t.points[k] = {double(i + 1) * 0.5 * double(k + 1), 0.0, 0.0};
      cls.push_back(t);
    }
  return bank;
}

}  // namespace

static void BM_ScanRecurrent(benchmark::State& state) {
  Rng rng(1);
  const auto L = std::size_t(state.range(0));
  auto p = random_sequence(rng, L, 8);
  auto x = random_tensor(rng, {L, 32}, -1, 1);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ssm::scan(p, x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanRecurrent)->RangeMultiplier(2)->Range(16, 512)->Complexity(benchmark::oN);

// Quadratic oracle: build the L x L transfer matrix, then multiply.
static void BM_ScanMaterialized(benchmark::State& state) {
  Rng rng(1);
  const auto L = std::size_t(state.range(0));
  auto p = random_sequence(rng, L, 8);
  auto x = random_tensor(rng, {L, 32}, -1, 1);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(ssm::materialize(p), x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanMaterialized)->RangeMultiplier(2)->Range(16, 512)->Complexity(benchmark::oNSquared);

static void BM_Attention(benchmark::State& state) {
  Rng rng(2);
  ParameterStore store(3);
  auto att = attention::AttentionParams::create(store, "att", 32, 2);
  auto q = random_tensor(rng, {9, 32}, -1, 1);
  auto kv = random_tensor(rng, {std::size_t(state.range(0)), 32}, -1, 1);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(attention::attend(att, q, kv, kv));
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(64)->Arg(129)->Arg(256);

static void BM_ModelForward(benchmark::State& state) {
  const auto sc = world::generate(11);
  model::PieModel m(model::ModelConfig{});
  const auto bank = line_bank();
  for (auto _ : state) benchmark::DoNotOptimize(m.plan(sc, bank));
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

static void BM_ModelForwardBackward(benchmark::State& state) {
  const auto sc = world::generate(11);
  model::PieModel m(model::ModelConfig{});
  const auto bank = line_bank();
  for (auto _ : state) {
    auto out = m.forward(sc, bank, nullptr, model::AnchorChoice{sc.command == Command::unknown ? Command::straight : sc.command, 0});
    backward(ops::sum(out.trajectory));
    m.params().zero_grad();
  }
}
BENCHMARK(BM_ModelForwardBackward)->Unit(benchmark::kMillisecond);

static void BM_ScoreTrajectory(benchmark::State& state) {
  const auto sc = world::generate(12);
  for (auto _ : state) benchmark::DoNotOptimize(pdm::score_trajectory(sc.expert, sc));
}
BENCHMARK(BM_ScoreTrajectory);

static void BM_Generate(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(world::generate(seed++));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
