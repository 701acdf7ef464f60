#include <gtest/gtest.h>

#include <sstream>

#include "metric_oracles.hpp"

namespace poolnet {
namespace {

using namespace poolnet::testing;

SaliencyMap smap(int w, int h, std::vector<double> v) { return SaliencyMap::from(w, h, std::move(v)); }
GroundTruth gmap(int w, int h, std::vector<double> v) { return GroundTruth::from(w, h, std::move(v)); }

TEST(FMeasure, ScalarValues) {
  EXPECT_DOUBLE_EQ(f_measure(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(f_measure(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(f_measure(0, 0), 0.0);
  EXPECT_NEAR(f_measure(0.8, 0.5), 1.3 * 0.4 / (0.24 + 0.5), 1e-15);
  EXPECT_NEAR(f_measure(0.8, 0.5), 0.7027027027, 1e-10);
}

TEST(Mae, ValuesAndErrors) {
  EXPECT_DOUBLE_EQ(mae(smap(2, 1, {0.2, 0.9}), gmap(2, 1, {0.2, 0.9})), 0.0);
  EXPECT_DOUBLE_EQ(mae(smap(2, 2, {1, 1, 1, 1}), gmap(2, 2, {0, 0, 0, 0})), 1.0);
  EXPECT_THROW(mae(smap(2, 1, {0, 0}), gmap(1, 2, {0, 0})), std::invalid_argument);
  EXPECT_THROW(smap(2, 1, {0, 1.5}), std::invalid_argument);
  EXPECT_THROW(gmap(1, 1, {-0.1}), std::invalid_argument);
}

TEST(Mae, SymmetricAndFlipInvariant) {
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    auto a = random_map_values(rng, 24);
    auto b = random_map_values(rng, 24);
    const double m = mae(smap(6, 4, a), gmap(6, 4, b));
    EXPECT_DOUBLE_EQ(m, mae(smap(6, 4, b), gmap(6, 4, a)));
    auto fa = a, fb = b;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) {
        fa[y * 6 + x] = a[y * 6 + 5 - x];
        fb[y * 6 + x] = b[y * 6 + 5 - x];
      }
    EXPECT_NEAR(m, mae(smap(6, 4, fa), gmap(6, 4, fb)), 1e-15);
  }
}

TEST(PrSweep, MatchesBruteForceOracleOnRandomFixtures) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto maps = random_fixture(rng, 1 + trial % 4);
    const PrCurve c = pr_sweep(maps);
    const OracleCurve o = pr_oracle(maps);
    for (int t = 0; t < 256; ++t) {
      ASSERT_NEAR(c.points[t].precision, o.precision[t], 1e-12) << "trial " << trial << " t " << t;
      ASSERT_NEAR(c.points[t].recall, o.recall[t], 1e-12) << "trial " << trial << " t " << t;
      ASSERT_NEAR(f_measure(c.points[t].precision, c.points[t].recall),
                  f_oracle(o.precision[t], o.recall[t]), 1e-12);
    }
    ASSERT_NEAR(max_f(c), max_f_oracle(o), 1e-12);
    for (const auto& [s, g] : maps) ASSERT_NEAR(mae(s, g), mae_oracle(s, g), 1e-12);
  }
}

TEST(PrSweep, TwoValueMapAgainstHandCountedConfusion) {
  // S in {0.2, 0.8}; GT positive at cells 0, 1, 2.
  const auto s = smap(3, 2, {0.8, 0.8, 0.2, 0.8, 0.2, 0.2});
  const auto g = gmap(3, 2, {1, 1, 1, 0, 0, 0});
  const PrCurve c = pr_sweep({{s, g}});
  // t <= 0.2: everything predicted: P = 3/6, R = 1
  EXPECT_DOUBLE_EQ(c.points[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(c.points[51].precision, 0.5);
  EXPECT_DOUBLE_EQ(c.points[51].recall, 1.0);
  // 0.2 < t <= 0.8: three 0.8 cells predicted, two of them positive
  EXPECT_DOUBLE_EQ(c.points[52].precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(c.points[204].recall, 2.0 / 3);
  // t > 0.8: nothing predicted
  EXPECT_DOUBLE_EQ(c.points[205].precision, 1.0);
  EXPECT_DOUBLE_EQ(c.points[205].recall, 0.0);
  EXPECT_DOUBLE_EQ(max_f(c), f_measure(2.0 / 3, 2.0 / 3));
}

TEST(PrSweep, PerfectPrediction) {
  const auto s = smap(2, 2, {1, 0, 0, 1});
  const auto g = gmap(2, 2, {1, 0, 0, 1});
  const MetricsRecord r = evaluate({{s, g}});
  for (int t = 1; t < 256; ++t) {
    EXPECT_DOUBLE_EQ(r.curve.points[t].precision, 1.0);
    EXPECT_DOUBLE_EQ(r.curve.points[t].recall, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.max_f, 1.0);
  EXPECT_DOUBLE_EQ(r.mae, 0.0);
}

TEST(PrSweep, CopiesAreIdempotentAndRecallMonotone) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto one = random_fixture(rng, 1);
    std::vector<MapPair> many(5, one[0]);
    const PrCurve a = pr_sweep(one);
    const PrCurve b = pr_sweep(many);
    for (int t = 0; t < 256; ++t) {
      EXPECT_NEAR(a.points[t].precision, b.points[t].precision, 1e-15);
      EXPECT_NEAR(a.points[t].recall, b.points[t].recall, 1e-15);
      if (t > 0) EXPECT_LE(a.points[t].recall, a.points[t - 1].recall);
    }
    const double mf = max_f(a);
    EXPECT_GE(mf, 0.0);
    EXPECT_LE(mf, 1.0);
    for (const auto& p : a.points) EXPECT_GE(mf, f_measure(p.precision, p.recall));
  }
}

TEST(PrSweep, InvertedPredictionOnlyScoresAtThresholdZero) {
  std::vector<double> g{1, 0, 0, 1, 1, 0, 0, 0, 1};
  std::vector<double> s(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = 1 - g[i];
  const PrCurve c = pr_sweep({{smap(3, 3, s), gmap(3, 3, g)}});
  for (int t = 1; t < 256; ++t) EXPECT_DOUBLE_EQ(c.points[t].recall, 0.0);
  EXPECT_DOUBLE_EQ(max_f(c), f_measure(4.0 / 9, 1.0));
}

TEST(PrSweep, ConstantHalfPredictionAgainstOracle) {
  const std::vector<MapPair> maps{{smap(4, 2, std::vector<double>(8, 0.5)),
                                   gmap(4, 2, {1, 1, 1, 1, 0, 0, 0, 0})}};
  const OracleCurve o = pr_oracle(maps);
  EXPECT_DOUBLE_EQ(max_f(pr_sweep(maps)), max_f_oracle(o));
  EXPECT_DOUBLE_EQ(max_f(pr_sweep(maps)), f_measure(0.5, 1.0));
}

TEST(PrSweep, PerImageAveragingDiffersFromPooledPixels) {
  // Image A: 1 positive pixel predicted correctly among 4.
  // Image B: 16 pixels, 8 positives, prediction covers 4 positives + 4 negatives.
  const auto sa = smap(2, 2, {1, 0, 0, 0});
  const auto ga = gmap(2, 2, {1, 0, 0, 0});
  std::vector<double> sb(16, 0.0), gbv(16, 0.0);
  for (int i = 0; i < 8; ++i) gbv[i] = 1;
  for (int i = 4; i < 12; ++i) sb[i] = 1;
  const std::vector<MapPair> maps{{sa, ga}, {smap(4, 4, sb), gmap(4, 4, gbv)}};
  const PrCurve c = pr_sweep(maps);
  // per image: P = (1 + 0.5) / 2, R = (1 + 0.5) / 2
  EXPECT_DOUBLE_EQ(c.points[128].precision, 0.75);
  EXPECT_DOUBLE_EQ(c.points[128].recall, 0.75);
  // pooled: TP = 5, FP = 4, FN = 4
  const double pooled_p = 5.0 / 9;
  const double pooled_r = 5.0 / 9;
  EXPECT_GT(std::abs(c.points[128].precision - pooled_p), 0.1);
  EXPECT_GT(std::abs(c.points[128].recall - pooled_r), 0.1);
}

TEST(PrSweep, EmptyGroundTruthExcludedFromRecallAndFlagged) {
  const auto s = smap(2, 1, {0.9, 0.1});
  const std::vector<MapPair> maps{{s, gmap(2, 1, {1, 0})}, {s, gmap(2, 1, {0, 0})}};
  const PrCurve c = pr_sweep(maps);
  EXPECT_EQ(c.empty_gt_images, std::vector<std::size_t>{1});
  EXPECT_EQ(c.points[100].recall_images, 1);
  EXPECT_DOUBLE_EQ(c.points[100].recall, 1.0);
  // precision: image 0 -> 1, image 1 -> 0 (one false positive)
  EXPECT_DOUBLE_EQ(c.points[100].precision, 0.5);
  EXPECT_THROW(pr_sweep({}), std::invalid_argument);
}

TEST(PrSweep, SoftGroundTruthBinarisedAtHalf) {
  const auto s = smap(3, 1, {1, 1, 1});
  const PrCurve c = pr_sweep({{s, gmap(3, 1, {0.5, 0.49, 0.9})}});
  EXPECT_DOUBLE_EQ(c.points[255].precision, 2.0 / 3);
}

TEST(Metrics, CsvLayout) {
  const auto s = smap(2, 1, {0.9, 0.1});
  const MetricsRecord r = evaluate({{s, gmap(2, 1, {1, 0})}, {s, gmap(2, 1, {0, 0})}});
  std::ostringstream os;
  write_metrics_csv(os, r);
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u + 1u + 256u + 1u);
  EXPECT_EQ(lines[0], "max_f,mae");
  EXPECT_EQ(lines[2], "threshold,precision,recall");
  EXPECT_EQ(lines[3].substr(0, 2), "0,");
  EXPECT_EQ(lines[258].substr(0, 2), "1,");
  EXPECT_EQ(lines.back(), "# empty ground truth (excluded from recall): 1");
}

}  // namespace
}  // namespace poolnet
