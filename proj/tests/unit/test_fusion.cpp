#include <gtest/gtest.h>

#include "pie/fusion.hpp"
#include "pie/ops.hpp"

namespace pie::fusion {
namespace {

ModalityGrid random_grid(Rng& rng, Modality m, std::size_t h, std::size_t w, std::size_t d) {
  std::vector<double> v(h * w * d);
  for (auto& x : v) x = rng.normal();
  return {m, Tensor({h, w, d}, v)};
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ModalityGrid perturbed(const ModalityGrid& g, std::size_t flat, double delta) {
  auto v = vals(g.values);
  v[flat] += delta;
  return {g.modality, Tensor(g.values.shape(), v)};
}

TEST(Fusion, LidarCentricHasNoUpstreamLeakage) {
  ParameterStore store(1);
  auto br = Branch::create(store, "lc", 2, 8, 4);
  Rng rng(2);
  auto img = random_grid(rng, Modality::image, 2, 4, 8);
  auto lid = random_grid(rng, Modality::lidar, 3, 3, 8);
  auto base = lidar_centric_fuse(img, lid, br);
  for (std::size_t tok = 0; tok < lid.tokens(); ++tok) {
    auto out = lidar_centric_fuse(img, perturbed(lid, tok * 8 + 3, 2.0), br);
    for (std::size_t i = 0; i < img.tokens() * 8; ++i) ASSERT_EQ(out[i], base[i]);
  }
  // The trailing segment does see the leading one.
  auto out = lidar_centric_fuse(perturbed(img, 0, 2.0), lid, br);
  EXPECT_NE(out[img.tokens() * 8], base[img.tokens() * 8]);
}

TEST(Fusion, ImageCentricHasNoUpstreamLeakage) {
  ParameterStore store(3);
  auto br = Branch::create(store, "ic", 2, 8, 4);
  Rng rng(4);
  auto img = random_grid(rng, Modality::image, 2, 4, 8);
  auto lid = random_grid(rng, Modality::lidar, 3, 3, 8);
  auto base = image_centric_fuse(img, lid, br);
  for (std::size_t tok = 0; tok < img.tokens(); ++tok) {
    auto out = image_centric_fuse(perturbed(img, tok * 8 + 5, -1.5), lid, br);
    for (std::size_t i = 0; i < lid.tokens() * 8; ++i) ASSERT_EQ(out[i], base[i]);
  }
}

TEST(Fusion, IdentityBranchesDoubleTheInput) {
  Rng rng(5);
  auto img = random_grid(rng, Modality::image, 2, 4, 8);
  auto lid = random_grid(rng, Modality::lidar, 4, 2, 8);
  Branch identity;
  for (auto mode : {Variant::plus_plus, Variant::plus_minus}) {
    auto f = unidirectional_variant(img, lid, identity, identity, mode);
    for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_EQ(f.image.values[i], 2.0 * img.values[i]);
    for (std::size_t i = 0; i < lid.values.size(); ++i) EXPECT_EQ(f.lidar.values[i], 2.0 * lid.values[i]);
  }
}

TEST(Fusion, PlusPlusWithEqualBranchesIsTwiceOneBranch) {
  ParameterStore store(6);
  auto br = Branch::create(store, "b", 1, 8, 4);
  Rng rng(7);
  auto img = random_grid(rng, Modality::image, 2, 2, 8);
  auto lid = random_grid(rng, Modality::lidar, 2, 3, 8);
  auto f = unidirectional_variant(img, lid, br, br, Variant::plus_plus);
  auto single = lidar_centric_fuse(img, lid, br);
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_EQ(f.image.values[i], 2.0 * single[i]);
  for (std::size_t i = 0; i < lid.values.size(); ++i) EXPECT_EQ(f.lidar.values[i], 2.0 * single[img.values.size() + i]);
}

// Independent index bookkeeping: run each branch on its own concatenation and
// add the rows that belong to the same (modality, position).
TEST(Fusion, BidirectionalMatchesIndexOracle) {
  ParameterStore store(8);
  auto lc = Branch::create(store, "lc", 2, 8, 4);
  auto ic = Branch::create(store, "ic", 2, 8, 4);
  Rng rng(9);
  auto img = random_grid(rng, Modality::image, 2, 4, 8);
  auto lid = random_grid(rng, Modality::lidar, 3, 2, 8);
  const std::size_t Li = img.tokens(), Ll = lid.tokens(), D = 8;
  auto a = lc(ops::concat({img.sequence(), lid.sequence()}, 0));
  auto b = ic(ops::concat({lid.sequence(), img.sequence()}, 0));
  auto f = bidirectional_fuse(img, lid, lc, ic);
  for (std::size_t p = 0; p < Li; ++p)
    for (std::size_t d = 0; d < D; ++d) EXPECT_EQ(f.image.values[p * D + d], a[p * D + d] + b[(Ll + p) * D + d]);
  for (std::size_t p = 0; p < Ll; ++p)
    for (std::size_t d = 0; d < D; ++d) EXPECT_EQ(f.lidar.values[p * D + d], a[(Li + p) * D + d] + b[p * D + d]);
  auto pm = unidirectional_variant(img, lid, lc, ic, Variant::plus_minus);
  EXPECT_EQ(vals(pm.image.values), vals(f.image.values));
  EXPECT_EQ(vals(pm.lidar.values), vals(f.lidar.values));
}

TEST(Fusion, PlusPlusAndPlusMinusDiffer) {
  ParameterStore store(10);
  auto a = Branch::create(store, "a", 2, 8, 4);
  auto b = Branch::create(store, "b", 2, 8, 4);
  Rng rng(11);
  auto img = random_grid(rng, Modality::image, 4, 4, 8);
  auto lid = random_grid(rng, Modality::lidar, 4, 4, 8);
  auto pp = unidirectional_variant(img, lid, a, b, Variant::plus_plus);
  auto pm = unidirectional_variant(img, lid, a, b, Variant::plus_minus);
  EXPECT_NE(vals(pp.image.values), vals(pm.image.values));
  EXPECT_NE(vals(pp.lidar.values), vals(pm.lidar.values));
}

// Tags every token with a unique id through identity branches; each output
// position must be the sum of the same tag from both orders.
TEST(Fusion, SegmentAlignmentTracer) {
  const std::size_t H = 3, W = 2, D = 2;
  std::vector<double> iv(H * W * D), lv(H * W * D);
  for (std::size_t p = 0; p < H * W; ++p) {
    iv[p * D] = 1000.0 + double(p);
    iv[p * D + 1] = 0.0;
    lv[p * D] = 2000.0 + double(p);
    lv[p * D + 1] = 1.0;
  }
  ModalityGrid img{Modality::image, Tensor({H, W, D}, iv)};
  ModalityGrid lid{Modality::lidar, Tensor({H, W, D}, lv)};
  Branch identity;
  auto f = bidirectional_fuse(img, lid, identity, identity);
  for (std::size_t p = 0; p < H * W; ++p) {
    EXPECT_EQ(f.image.values[p * D], 2.0 * (1000.0 + double(p)));
    EXPECT_EQ(f.image.values[p * D + 1], 0.0);
    EXPECT_EQ(f.lidar.values[p * D], 2.0 * (2000.0 + double(p)));
    EXPECT_EQ(f.lidar.values[p * D + 1], 2.0);
  }
  EXPECT_EQ(f.image.modality, Modality::image);
  EXPECT_EQ(f.lidar.modality, Modality::lidar);
}

TEST(Fusion, ShapesAndDeterminismOverGrid) {
  const std::vector<std::array<std::size_t, 3>> dims = {{4, 4, 8}, {2, 8, 8}, {8, 2, 16}};
  for (auto [h, w, d] : dims) {
    ParameterStore store(12);
    auto a = Branch::create(store, "a", 2, d, 4);
    auto b = Branch::create(store, "b", 2, d, 4);
    Rng rng(13);
    auto img = random_grid(rng, Modality::image, h, w, d);
    auto lid = random_grid(rng, Modality::lidar, h, w, d);
    auto f1 = bidirectional_fuse(img, lid, a, b);
    auto f2 = bidirectional_fuse(img, lid, a, b);
    EXPECT_EQ(f1.image.values.shape(), (Shape{h, w, d}));
    EXPECT_EQ(f1.lidar.values.shape(), (Shape{h, w, d}));
    EXPECT_EQ(vals(f1.image.values), vals(f2.image.values));
    EXPECT_EQ(vals(f1.lidar.values), vals(f2.lidar.values));
  }
}

TEST(Fusion, ChannelMismatchRejected) {
  Rng rng(14);
  Branch identity;
  auto img = random_grid(rng, Modality::image, 2, 2, 8);
  auto lid = random_grid(rng, Modality::lidar, 2, 2, 4);
  EXPECT_THROW(lidar_centric_fuse(img, lid, identity), ShapeError);
}

}  // namespace
}  // namespace pie::fusion
