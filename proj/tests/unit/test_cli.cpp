#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "pie/dataset.hpp"
#include "fixtures.hpp"

namespace pie::cli {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

config::RunConfig tiny() {
  auto c = config::RunConfig::defaults();
  c.set("data.train", "160");
  c.set("data.val", "6");
  c.set("data.test", "6");
  c.set("model.dim", "8");
  c.set("model.state_dim", "4");
  c.set("model.fusion_layers", "1");
  c.set("red.layers", "1");
  c.set("moe.hidden", "8");
  c.set("train.epochs", "1");
  c.set("train.batch_size", "32");
  return c;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = pie::testing::scratch("cli");
    fs::remove_all(root);
    std::ostringstream log;
    gen_data(tiny(), root / "data", log);
    cluster_anchors(tiny(), root / "data", root / "anchors.json", log);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }
  static inline fs::path root;
};

TEST_F(Cli, GenDataIsByteIdentical) {
  std::ostringstream log;
  gen_data(tiny(), root / "again", log);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "manifest.json", "config.txt"})
    EXPECT_EQ(slurp(root / "data" / f), slurp(root / "again" / f)) << f;
  EXPECT_EQ(world::load_dataset(root / "data" / "train.jsonl").size(), 160u);
}

TEST_F(Cli, SplitRangesAreDisjoint) {
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (std::size_t s = 0; s < 3; ++s) ranges.push_back(split_seed_range(seed, s, 5000));
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b)
        EXPECT_TRUE(ranges[a].second <= ranges[b].first || ranges[b].second <= ranges[a].first);
  }
  EXPECT_LE(split_seed_range(0, 2, 5000).second, split_seed_range(1, 0, 5000).first);
  EXPECT_THROW(split_seed_range(0, 0, 100'000'000), UsageError);
}

TEST_F(Cli, ExpertScoresOne) {
  std::ostringstream log;
  eval(tiny(), root / "data", Planner::expert, {}, {}, root / "expert.jsonl", log);
  const auto agg = score(tiny(), root / "data", root / "expert.jsonl", root / "expert_scores", log);
  EXPECT_EQ(agg.count, 6u);
  EXPECT_EQ(agg.mean_sub.nc, 1.0);
  EXPECT_EQ(agg.mean_sub.dac, 1.0);
  EXPECT_EQ(agg.mean_sub.ep, 1.0);
  EXPECT_TRUE(fs::exists(root / "expert_scores" / "scores.csv"));
  EXPECT_TRUE(fs::exists(root / "expert_scores" / "summary.txt"));
}

TEST_F(Cli, TrainEvalScoreAreDeterministic) {
  std::ostringstream log;
  for (const char* run : {"run_a", "run_b"}) {
    train(tiny(), root / "data", root / "anchors.json", root / run, log);
    eval(tiny(), root / "data", Planner::model, root / "anchors.json", root / run / "checkpoint.bin",
         root / run / "plan.jsonl", log);
    score(tiny(), root / "data", root / run / "plan.jsonl", root / run / "scores", log);
  }
  EXPECT_EQ(slurp(root / "run_a" / "checkpoint.bin"), slurp(root / "run_b" / "checkpoint.bin"));
  EXPECT_EQ(slurp(root / "run_a" / "plan.jsonl"), slurp(root / "run_b" / "plan.jsonl"));
  EXPECT_EQ(slurp(root / "run_a" / "scores" / "scores.jsonl"), slurp(root / "run_b" / "scores" / "scores.jsonl"));
}

TEST_F(Cli, CheckpointFromAnotherConfigIsRejected) {
  std::ostringstream log;
  train(tiny(), root / "data", root / "anchors.json", root / "run_c", log);
  auto other = tiny();
  other.set("model.dim", "16");
  EXPECT_ANY_THROW(eval(other, root / "data", Planner::model, root / "anchors.json", root / "run_c" / "checkpoint.bin",
                        root / "bad.jsonl", log));
}

TEST_F(Cli, AblateFusionHasThreeRows) {
  std::ostringstream log;
  const auto rows = ablate(tiny(), "fusion", root / "data", root / "anchors.json", root / "ablate", log);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].setting, "none");
  EXPECT_EQ(rows[1].setting, "++");
  EXPECT_EQ(rows[2].setting, "+-");
  EXPECT_EQ(rows[2].delta_pdms, 0.0);
  EXPECT_LT(rows[0].params, rows[2].params);
  EXPECT_EQ(rows[1].params, rows[2].params);
  EXPECT_TRUE(fs::exists(root / "ablate" / "ablation.csv"));
}

TEST_F(Cli, UsageErrors) {
  std::ostringstream log;
  EXPECT_THROW(ablation_matrices("colour"), UsageError);
  EXPECT_EQ(ablation_matrices("all").size(), 4u);
  EXPECT_THROW(planner_from_string("oracle"), UsageError);
  EXPECT_THROW(cluster_anchors(tiny(), root / "missing", root / "x.json", log), UsageError);
  EXPECT_THROW(score(tiny(), root / "data", root / "missing.jsonl", root / "s", log), UsageError);
}

TEST_F(Cli, PlotWritesSvg) {
  std::ostringstream log;
  train(tiny(), root / "data", root / "anchors.json", root / "run_p", log);
  const auto files = plot({root / "run_p" / "metrics.jsonl", {}, root / "data", {}, root / "anchors.json", 2}, root / "plots", log);
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_NE(slurp(f).find("<svg"), std::string::npos) << f;
}

}  // namespace
}  // namespace pie::cli
