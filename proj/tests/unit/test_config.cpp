#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pie/config.hpp"
#include "fixtures.hpp"

namespace pie::config {
namespace {

TEST(Config, DefaultsMatchModuleDefaults) {
  const auto c = RunConfig::defaults();
  const auto m = model_config(c);
  EXPECT_EQ(m.model_dim, model::ModelConfig{}.model_dim);
  EXPECT_EQ(m.decoder.n_layers, 2u);
  EXPECT_EQ(m.decoder.n_experts, 3u);
  EXPECT_EQ(m.decoder.gate.k, 2u);
  EXPECT_EQ(model_config(c).hash(), model::ModelConfig{}.hash());
  EXPECT_DOUBLE_EQ(train_config(c).optimizer.lr, 2e-4);
  EXPECT_EQ(c.entry("seed").source, "default");
}

TEST(Config, LayersOverrideInOrder) {
  auto c = RunConfig::defaults();
  c.merge_text("model.dim = 16\ntrain.lr = 0.01  # comment\n\n", "file");
  std::string a = "PIE_MODEL_DIM=24", b = "PIE_TRAIN_EPOCHS=7", junk = "HOME=/root", other = "PIE_NOT_A_KEY=1";
  char* envp[] = {a.data(), b.data(), junk.data(), other.data(), nullptr};
  c.merge_env(envp);
  c.set("train.epochs", "9", "--set");
  EXPECT_EQ(c.count("model.dim"), 24u);
  EXPECT_EQ(c.entry("model.dim").source, "env PIE_MODEL_DIM");
  EXPECT_EQ(c.count("train.epochs"), 9u);
  EXPECT_DOUBLE_EQ(c.real("train.lr"), 0.01);
  EXPECT_EQ(c.entry("train.lr").source, "file:2");
}

TEST(Config, EnvNames) {
  EXPECT_EQ(env_name("model.dim"), "PIE_MODEL_DIM");
  EXPECT_EQ(env_name("moe.p_drop"), "PIE_MOE_P_DROP");
}

TEST(Config, Rejections) {
  auto c = RunConfig::defaults();
  EXPECT_THROW(c.set("model.dims", "3"), ConfigError);
  EXPECT_THROW(c.set("model.dim", "three"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("red.moe", "maybe"), ConfigError);
  EXPECT_THROW(c.merge_text("model.dim 3\n", "f"), ConfigError);
  EXPECT_THROW(c.merge_file("/nonexistent/pie.cfg"), ConfigError);
  EXPECT_THROW(c.text("nope"), ConfigError);
  c.set("model.fusion", "sideways");
  EXPECT_THROW(model_config(c), ConfigError);
  auto d = RunConfig::defaults();
  d.set("model.dim", "-1");
  EXPECT_THROW(d.count("model.dim"), ConfigError);
  try {
    c.set("model.dim", "x", "cfg:4");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:4"), std::string::npos);
  }
}

TEST(Config, SnapshotReproduces) {
  auto c = RunConfig::defaults();
  c.set("model.fusion", "++");
  c.set("moe.p_drop", "0.25");
  c.set("red.reasoning", "false");
  auto d = RunConfig::defaults();
  d.merge_text(c.snapshot(), "snapshot");
  EXPECT_EQ(d.snapshot(), c.snapshot());
  EXPECT_EQ(model_config(d).hash(), model_config(c).hash());
  EXPECT_NE(model_config(d).hash(), model::ModelConfig{}.hash());

  const auto path = pie::testing::scratch("config.txt");
  c.write_snapshot(path);
  auto e = RunConfig::defaults();
  e.merge_file(path);
  EXPECT_EQ(e.snapshot(), c.snapshot());
  std::filesystem::remove(path);
}

TEST(Config, RealsRoundTripExactly) {
  auto c = RunConfig::defaults();
  c.set("train.lr", "0.1");
  auto d = RunConfig::defaults();
  d.merge_text(c.snapshot(), "s");
  EXPECT_EQ(d.real("train.lr"), 0.1);
}

}  // namespace
}  // namespace pie::config
