#include <gtest/gtest.h>

#include <set>

#include "gradcheck.hpp"
#include "poolnet/losses.hpp"
#include "poolnet/model.hpp"

namespace poolnet {
namespace {

Tensor<float> random_image(int h, int w, std::uint64_t seed, int n = 1) {
  Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(n) * 3 * h * w);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor<float>::from({n, 3, h, w}, std::move(v));
}

float max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  float m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

TEST(ModelConfig, PresetsAndRows) {
  const auto desk = ModelConfig::desk();
  EXPECT_EQ(desk.backbone_widths, (std::vector<int>{16, 32, 64, 128, 128}));
  EXPECT_EQ(desk.pyramid(), (std::array<int, 4>{32, 64, 128, 128}));
  EXPECT_EQ(desk.edge_residual_widths(), (std::array<int, 3>{32, 64, 128}));
  const auto paper = ModelConfig::paper_scale();
  EXPECT_EQ(paper.pyramid(), (std::array<int, 4>{128, 256, 512, 512}));
  EXPECT_EQ(paper.edge_residual_widths(), (std::array<int, 3>{128, 256, 512}));
  const bool rows[6][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  for (int r = 1; r <= 6; ++r) {
    const auto c = ModelConfig::ablation_row(r);
    EXPECT_EQ(c.enable_ppm, rows[r - 1][0]);
    EXPECT_EQ(c.enable_ggf, rows[r - 1][1]);
    EXPECT_EQ(c.enable_fam, rows[r - 1][2]);
  }
  EXPECT_THROW(ModelConfig::ablation_row(7), ConfigError);
}

TEST(ModelConfig, ValidateRejectsBadLists) {
  auto c = ModelConfig::desk();
  c.fam_rates = {4, 2, 8};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fam_rates = {1, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fam_rates = {2, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.ppm_sizes = {1, 3};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.backbone_widths = {16, 32};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(PoolNet<float>(c, 0), ConfigError);
}

TEST(Model, BackbonePyramidShapes) {
  PoolNet<float> m(ModelConfig::desk(), 1);
  const auto p = m.backbone(random_image(64, 64, 1));
  EXPECT_EQ(p.levels[0].shape(), (Shape{1, 32, 32, 32}));
  EXPECT_EQ(p.levels[1].shape(), (Shape{1, 64, 16, 16}));
  EXPECT_EQ(p.levels[2].shape(), (Shape{1, 128, 8, 8}));
  EXPECT_EQ(p.levels[3].shape(), (Shape{1, 128, 4, 4}));
  EXPECT_EQ(PyramidFeatures<float>::rates, (std::array<int, 4>{2, 4, 8, 16}));
  EXPECT_THROW(m.backbone(random_image(40, 64, 2)), ShapeError);
}

TEST(Model, RateInvariantOnNonSquareInput) {
  PoolNet<float> m(ModelConfig::desk(), 1);
  const auto p = m.backbone(random_image(48, 80, 3));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.levels[i].shape().h * p.rates[i], 48);
    EXPECT_EQ(p.levels[i].shape().w * p.rates[i], 80);
  }
}

TEST(Model, PaperScaleC5Has512Channels) {
  auto cfg = ModelConfig::paper_scale();
  PoolNet<float> m(cfg, 1);
  EXPECT_EQ(m.backbone(random_image(16, 16, 4)).levels[3].shape().c, 512);
}

TEST(Model, AllSixRowsForwardAt64) {
  for (int r = 1; r <= 6; ++r) {
    PoolNet<float> m(ModelConfig::ablation_row(r), 5);
    ForwardTrace t;
    const auto out = m.forward(random_image(64, 64, 6), {}, &t);
    EXPECT_EQ(out.saliency_logits.shape(), (Shape{1, 1, 64, 64})) << "row " << r;
    EXPECT_TRUE(out.edge_logits.empty());
    const auto c = ModelConfig::ablation_row(r);
    EXPECT_EQ(t.fam_branch_counts.size(), c.enable_fam ? 4u : 0u);
    EXPECT_EQ(t.ppm_branch_sizes.empty(), !c.enable_ppm);
  }
}

TEST(Model, PpmBranchSizes) {
  PoolNet<float> m(ModelConfig::desk(), 7);
  ForwardTrace t;
  m.forward(random_image(64, 64, 8), {}, &t);
  EXPECT_EQ(t.ppm_branch_sizes,
            (std::vector<std::array<int, 2>>{{4, 4}, {3, 3}, {5, 5}, {1, 1}}));
  ForwardTrace t80;
  m.forward(random_image(80, 80, 9), {}, &t80);
  EXPECT_EQ(t80.ppm_branch_sizes,
            (std::vector<std::array<int, 2>>{{5, 5}, {3, 3}, {5, 5}, {1, 1}}));
}

TEST(Model, PpmConstantInputGivesConstantChannels) {
  PoolNet<double> m(ModelConfig::desk(), 10);
  // Interior cells of a constant map are constant after pooling, resizing and
  // the merge conv; border cells see zero padding.
  const auto y = m.ppm(Tensor<double>::full({1, 128, 7, 7}, 0.3));
  for (int c = 0; c < y.shape().c; ++c) {
    const double v = y.at(0, c, 1, 1);
    for (int i = 1; i < 6; ++i)
      for (int j = 1; j < 6; ++j) ASSERT_NEAR(y.at(0, c, i, j), v, 1e-12);
  }
}

TEST(Model, GgfFactorsAndChannels) {
  PoolNet<float> m(ModelConfig::desk(), 11);
  ForwardTrace t;
  m.forward(random_image(64, 64, 12), {}, &t);
  std::set<std::array<int, 2>> f(t.ggf_factors.begin(), t.ggf_factors.end());
  EXPECT_EQ(f, (std::set<std::array<int, 2>>{{2, 8}, {3, 4}, {4, 2}, {5, 1}}));
  const auto g = Tensor<float>::zeros({1, 128, 4, 4});
  const std::array<int, 4> pyr = m.config().pyramid();
  for (int level = 2; level <= 5; ++level) {
    const int f = 1 << (5 - level);
    EXPECT_EQ(m.ggf_inject(g, level).shape(), (Shape{1, pyr[level - 2], 4 * f, 4 * f}));
  }
  EXPECT_THROW(m.ggf_inject(g, 1), ShapeError);
}

TEST(Model, FamFourBranchesShapePreservedConstantBeforeMerge) {
  PoolNet<float> m(ModelConfig::desk(), 13);
  ForwardTrace t;
  Rng rng(14);
  std::vector<float> v(32 * 32 * 32);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  const auto y = m.fam(Tensor<float>::from({1, 32, 32, 32}, v), 2, &t);
  EXPECT_EQ(y.shape(), (Shape{1, 32, 32, 32}));
  EXPECT_EQ(t.fam_branch_counts, std::vector<int>{4});

  // Pooling and upsampling of a constant map stay constant.
  const auto c = Tensor<double>::full({1, 2, 16, 16}, 0.7);
  for (int r : {2, 4, 8}) {
    const auto b = upsample_bilinear(avg_pool2d(c, r), r);
    for (double x : b.data()) ASSERT_NEAR(x, 0.7, 1e-15);
  }
}

TEST(Model, FamAcceptsLevelsSmallerThanRate) {
  PoolNet<float> m(ModelConfig::desk(), 15);
  const auto y = m.fam(Tensor<float>::full({1, 128, 4, 4}, 0.5f), 5);
  EXPECT_EQ(y.shape(), (Shape{1, 128, 4, 4}));
}

TEST(Model, EdgeBranchShapesAndFusionWidth) {
  auto cfg = ModelConfig::desk();
  cfg.enable_edge = true;
  PoolNet<float> m(cfg, 16);
  ForwardTrace t;
  const auto out = m.forward(random_image(64, 48, 17), {}, &t);
  ASSERT_EQ(out.edge_logits.size(), 3u);
  for (const auto& e : out.edge_logits) EXPECT_EQ(e.shape(), (Shape{1, 1, 64, 48}));
  EXPECT_EQ(t.edge_concat_channels, 48);
  EXPECT_EQ(t.saliency_head_in_channels, 32 + 48);
  EXPECT_EQ(out.saliency_logits.shape(), (Shape{1, 1, 64, 48}));

  PoolNet<float> off(ModelConfig::desk(), 16);
  std::array<Tensor<float>, 3> levels{Tensor<float>::zeros({1, 32, 8, 8}),
                                      Tensor<float>::zeros({1, 64, 4, 4}),
                                      Tensor<float>::zeros({1, 128, 2, 2})};
  EXPECT_THROW(off.edge_branch(levels, 16, 16), ConfigError);
}

TEST(Model, ResidualBlockWithZeroWeightsIsIdentity) {
  auto cfg = ModelConfig::desk();
  cfg.enable_edge = true;
  PoolNet<double> m(cfg, 18);
  for (auto& p : m.parameters()) {
    if (p.name.find(".res") != std::string::npos) {
      for (auto& v : p.tensor.data()) v = 0;
    }
  }
  const auto x = testing::random_tensor({1, 32, 6, 6}, 19).detach();
  const auto y = m.residual_block(0, x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Model, ParameterCountIsPureAndFamAddsParameters) {
  for (int r = 1; r <= 6; ++r) {
    const auto cfg = ModelConfig::ablation_row(r);
    EXPECT_EQ(PoolNet<float>(cfg, 1).parameter_count(), PoolNet<float>(cfg, 99).parameter_count());
    if (cfg.enable_fam) {
      auto off = cfg;
      off.enable_fam = false;
      EXPECT_GT(PoolNet<float>(cfg, 1).parameter_count(), PoolNet<float>(off, 1).parameter_count());
    }
  }
}

TEST(Model, ParameterNamesUniqueAndInitialisation) {
  auto cfg = ModelConfig::desk();
  cfg.enable_edge = true;
  PoolNet<double> m(cfg, 20);
  std::set<std::string> names;
  for (const auto& p : m.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    const Shape& s = p.tensor.shape();
    if (p.name.ends_with(".bias")) {
      for (double v : p.tensor.data()) ASSERT_EQ(v, 0.0);
    } else {
      const double fan_in = s.c * s.h * s.w;
      const double fan_out = s.n * s.h * s.w;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      double lo = 1, hi = -1;
      for (double v : p.tensor.data()) {
        ASSERT_LE(std::abs(v), bound) << p.name;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (p.tensor.numel() > 200) {
        EXPECT_LT(lo, -0.8 * bound) << p.name;
        EXPECT_GT(hi, 0.8 * bound) << p.name;
      }
    }
  }
}

TEST(Model, GlobalGuidanceIsLive) {
  for (int r : {3, 4, 6}) {
    PoolNet<float> m(ModelConfig::ablation_row(r), 21);
    for (auto& p : m.parameters()) {
      if (p.name.ends_with(".bias")) {
        Rng rng(fnv1a(p.name));
        for (auto& v : p.tensor.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
      }
    }
    const auto img = random_image(64, 64, 22);
    const auto with = m.forward(img).saliency_logits;
    const auto without = m.forward(img, {.skip_global_guidance = true}).saliency_logits;
    EXPECT_GT(max_abs_diff(with, without), 0.0f) << "row " << r;
  }
}

TEST(Model, EveryTrainableParameterGetsGradient) {
  for (int r = 1; r <= 6; ++r) {
    for (bool edge : {false, true}) {
      auto cfg = ModelConfig::ablation_row(r);
      cfg.enable_edge = edge;
      cfg.backbone_widths = {4, 8, 8, 8, 8};
      PoolNet<float> m(cfg, 23);
      const auto out = m.forward(random_image(32, 32, 24));
      Tensor<float> loss = sum(out.saliency_logits);
      for (const auto& e : out.edge_logits) loss = add(loss, sum(e));
      loss.backward();
      for (const auto& p : m.parameters()) {
        EXPECT_TRUE(p.tensor.has_grad()) << "row " << r << " edge " << edge << " " << p.name;
      }
    }
  }
}

TEST(Model, EdgeOffOutputIndependentOfEdgeSettings) {
  auto a = ModelConfig::desk();
  auto b = a;
  b.edge_widths = {8, 8, 8};
  PoolNet<float> ma(a, 25);
  PoolNet<float> mb(b, 25);
  const auto img = random_image(64, 64, 26);
  const auto ya = ma.forward(img).saliency_logits;
  const auto yb = mb.forward(img).saliency_logits;
  for (std::size_t i = 0; i < ya.numel(); ++i) ASSERT_EQ(ya.data()[i], yb.data()[i]);

  // Parameters shared with an edge-enabled model start from identical values.
  auto e = a;
  e.enable_edge = true;
  PoolNet<float> me(e, 25);
  for (const auto& p : ma.parameters()) {
    if (p.name == "head.score.weight") continue;  // widened by the edge features
    const auto* q = me.find(p.name);
    ASSERT_NE(q, nullptr) << p.name;
    for (std::size_t i = 0; i < p.tensor.numel(); ++i)
      ASSERT_EQ(p.tensor.data()[i], q->tensor.data()[i]) << p.name;
  }
}

TEST(Model, FloatAndDoubleAgree) {
  PoolNet<float> mf(ModelConfig::desk(), 27);
  PoolNet<double> md(ModelConfig::desk(), 27);
  const auto img = random_image(32, 32, 28);
  std::vector<double> dv(img.data().begin(), img.data().end());
  const auto yf = mf.forward(img).saliency_logits;
  const auto yd = md.forward(Tensor<double>::from(img.shape(), dv)).saliency_logits;
  for (std::size_t i = 0; i < yf.numel(); ++i) EXPECT_NEAR(yf.data()[i], yd.data()[i], 1e-4);
}

}  // namespace
}  // namespace poolnet
