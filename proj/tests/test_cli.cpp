#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "poolnet/commands.hpp"
#include "poolnet/image_io.hpp"

namespace poolnet {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> lines;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

const std::vector<std::string> kTiny = {"--set", "backbone_widths=4,8,8,8,8"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

fs::path synth(const std::string& name, const std::string& kind = "saliency", int n = 4) {
  const auto dir = testing::scratch_dir(name);
  const auto r = run({"synth", "--kind", kind, "--n", std::to_string(n), "--size", "32", "--output-dir",
                      dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return dir;
}

class HelpGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpGolden, MatchesCheckedInText) {
  const std::string sub = GetParam();
  std::vector<std::string> args;
  if (sub != "main") args.push_back(sub);
  args.push_back("--help");
  const auto r = run(args);
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, slurp(fs::path(POOLNET_GOLDEN_DIR) / ("help_" + sub + ".txt")));
}

INSTANTIATE_TEST_SUITE_P(Cli, HelpGolden,
                         ::testing::Values("main", "train", "infer", "eval", "ablate", "bench", "synth"));

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(run({"eval", "--manifest", "x"}).code, kExitConfig);
  EXPECT_EQ(run({"train", "--ablation-row", "7"}).code, kExitConfig);
  EXPECT_EQ(run({"synth", "--kind", "depth", "--output-dir", "x"}).code, kExitConfig);
}

TEST(Cli, TrainWritesEpochCheckpointsLogAndConfig) {
  const auto data = synth("cli_train");
  const auto out = testing::scratch_dir("cli_train_out");
  const auto r = run(with_tiny({"train", "--train-manifest", (data / "manifest.tsv").string(), "--output-dir",
                                out.string(), "--epochs", "2"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(out / "epoch_001.pnlb"));
  EXPECT_TRUE(fs::exists(out / "epoch_002.pnlb"));
  EXPECT_FALSE(fs::exists(out / "epoch_003.pnlb"));
  EXPECT_TRUE(fs::exists(out / "final.pnlb"));
  EXPECT_TRUE(fs::exists(out / "model.cfg"));
  const auto log = lines_of(slurp(out / "train_log.csv"));
  ASSERT_EQ(log.size(), 9u);
  EXPECT_EQ(log[0], "epoch,step,loss_type,loss_value,lr");
  EXPECT_EQ(log[8].substr(0, 5), "1,8,s");
  EXPECT_EQ(lines_of(r.out).size(), 2u);
}

TEST(Cli, JointEdgeWithoutEdgeBranchFailsBeforeWriting) {
  const auto data = synth("cli_joint_bad");
  const auto out = testing::scratch_dir("cli_joint_bad_out") / "never";
  const auto r = run(with_tiny({"train", "--train-manifest", (data / "manifest.tsv").string(), "--edge-manifest",
                                (data / "manifest.tsv").string(), "--output-dir", out.string(), "--joint-edge"}));
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, JointEdgeTrainingLogsBothLossTypes) {
  const auto sal = synth("cli_joint_sal");
  const auto edge = synth("cli_joint_edge", "edge");
  const auto out = testing::scratch_dir("cli_joint_out");
  const auto r = run(with_tiny({"train", "--train-manifest", (sal / "manifest.tsv").string(), "--edge-manifest",
                                (edge / "manifest.tsv").string(), "--output-dir", out.string(), "--epochs", "1",
                                "--enable-edge", "--joint-edge"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto log = slurp(out / "train_log.csv");
  EXPECT_NE(log.find(",sal,"), std::string::npos);
  EXPECT_NE(log.find(",edge,"), std::string::npos);
}

TEST(Cli, ResumeContinuesStepCounterAndMatchesUninterrupted) {
  const auto data = synth("cli_resume");
  const auto manifest = (data / "manifest.tsv").string();
  const auto full = testing::scratch_dir("cli_resume_full");
  const auto resumed = testing::scratch_dir("cli_resume_part");
  ASSERT_EQ(run(with_tiny({"train", "--train-manifest", manifest, "--output-dir", full.string(), "--epochs", "3"}))
                .code,
            kExitOk);
  const auto r = run(with_tiny({"train", "--train-manifest", manifest, "--output-dir", resumed.string(), "--epochs",
                                "3", "--resume", (full / "epoch_001.pnlb").string()}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto log = lines_of(slurp(resumed / "train_log.csv"));
  ASSERT_EQ(log.size(), 9u);
  EXPECT_EQ(log[1].substr(0, 4), "1,5,");
  EXPECT_EQ(log[8].substr(0, 5), "2,12,");
  EXPECT_FALSE(fs::exists(resumed / "epoch_001.pnlb"));
  EXPECT_TRUE(slurp(resumed / "final.pnlb") == slurp(full / "final.pnlb"));
}

TEST(Cli, InferWritesInputSizedMapsDeterministically) {
  const auto data = synth("cli_infer");
  const auto manifest = (data / "manifest.tsv").string();
  const auto ckpt = testing::scratch_dir("cli_infer_ckpt");
  ASSERT_EQ(run(with_tiny({"train", "--train-manifest", manifest, "--output-dir", ckpt.string(), "--epochs", "1",
                           "--enable-edge"}))
                .code,
            kExitOk);
  const auto a = testing::scratch_dir("cli_infer_a");
  const auto b = testing::scratch_dir("cli_infer_b");
  for (const auto& dir : {a, b}) {
    const auto r = run(with_tiny({"infer", "--checkpoint", (ckpt / "final.pnlb").string(), "--manifest", manifest,
                                  "--output-dir", dir.string(), "--enable-edge"}));
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  for (int i = 0; i < 4; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "img_%04d", i);
    const Image sal = read_pnm(a / (std::string(stem) + ".pgm"));
    EXPECT_EQ(sal.width, 32);
    EXPECT_EQ(sal.height, 32);
    EXPECT_EQ(sal.channels, 1);
    EXPECT_TRUE(slurp(a / (std::string(stem) + ".pgm")) == slurp(b / (std::string(stem) + ".pgm")));
    for (int k = 1; k <= 3; ++k) {
      const auto edge = a / (std::string(stem) + "_edge" + std::to_string(k) + ".pgm");
      ASSERT_TRUE(fs::exists(edge));
      EXPECT_EQ(read_pnm(edge).width, 32);
    }
  }
}

TEST(Cli, InferRejectsMismatchedCheckpoint) {
  const auto data = synth("cli_mismatch");
  const auto manifest = (data / "manifest.tsv").string();
  const auto ckpt = testing::scratch_dir("cli_mismatch_ckpt");
  ASSERT_EQ(run(with_tiny({"train", "--train-manifest", manifest, "--output-dir", ckpt.string(), "--epochs", "1"}))
                .code,
            kExitOk);
  const auto r = run({"infer", "--checkpoint", (ckpt / "final.pnlb").string(), "--manifest", manifest,
                      "--output-dir", testing::scratch_dir("cli_mismatch_out").string()});
  EXPECT_EQ(r.code, kExitData);
}

void write_gt_as_predictions(const fs::path& data, const fs::path& pred, bool invert) {
  for (int i = 0; i < 4; ++i) {
    char gt[32], img[32];
    std::snprintf(gt, sizeof gt, "gt_%04d.pgm", i);
    std::snprintf(img, sizeof img, "img_%04d.pgm", i);
    Image m = read_pnm(data / gt);
    if (invert)
      for (auto& p : m.pixels) p = static_cast<std::uint8_t>(255 - p);
    write_pnm(pred / img, m);
  }
}

TEST(Cli, EvalGroundTruthAgainstItselfAndInverted) {
  const auto data = synth("cli_eval");
  const auto manifest = (data / "manifest.tsv").string();
  const auto same = testing::scratch_dir("cli_eval_same");
  const auto inv = testing::scratch_dir("cli_eval_inv");
  write_gt_as_predictions(data, same, false);
  write_gt_as_predictions(data, inv, true);

  const auto r = run({"eval", "--pred-dir", same.string(), "--manifest", manifest});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "max_f,mae");
  EXPECT_EQ(lines[1], "1,0");
  EXPECT_EQ(lines[2], "threshold,precision,recall");
  EXPECT_EQ(lines.size(), 3u + 256u);

  const auto csv = testing::scratch_dir("cli_eval_csv") / "m.csv";
  const auto ri = run({"eval", "--pred-dir", inv.string(), "--manifest", manifest, "--output", csv.string()});
  ASSERT_EQ(ri.code, kExitOk) << ri.err;
  const auto inv_lines = lines_of(slurp(csv));
  EXPECT_EQ(inv_lines[1].substr(inv_lines[1].find(',') + 1), "1");
}

TEST(Cli, EvalMissingOrMisshapenPredictionIsDataError) {
  const auto data = synth("cli_eval_bad");
  const auto manifest = (data / "manifest.tsv").string();
  const auto pred = testing::scratch_dir("cli_eval_bad_pred");
  EXPECT_EQ(run({"eval", "--pred-dir", pred.string(), "--manifest", manifest}).code, kExitData);
  write_gt_as_predictions(data, pred, false);
  write_pnm(pred / "img_0002.pgm", Image{3, 3, 1, std::vector<std::uint8_t>(9, 0)});
  EXPECT_EQ(run({"eval", "--pred-dir", pred.string(), "--manifest", manifest}).code, kExitData);
}

TEST(Cli, AblateWritesOneLinePerRow) {
  const auto data = synth("cli_ablate", "saliency", 2);
  const auto r = run(with_tiny({"ablate", "--train-manifest", (data / "manifest.tsv").string(), "--epochs", "1",
                                "--seeds", "1"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "row,ppm,ggf,fam,seeds,max_f,mae");
  EXPECT_EQ(lines[1].substr(0, 10), "1,0,0,0,1,");
  EXPECT_EQ(lines[6].substr(0, 10), "6,1,1,1,1,");
}

TEST(Cli, BenchReportsTimingStatistics) {
  const auto r = run(with_tiny({"bench", "--width", "48", "--height", "32", "--iters", "3", "--warmup", "1"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "width,height,iters,threads,mean_ms,p50_ms,p95_ms");
  EXPECT_EQ(lines[1].substr(0, 8), "48,32,3,");
}

TEST(Cli, BenchLatencyGrowsWithInputSize) {
  ModelConfig c = ModelConfig::desk();
  c.backbone_widths = {4, 8, 8, 8, 8};
  const PoolNet<float> m(c, 1);
  const BenchStats small = bench_forward(m, 32, 32, 5, 1, 2);
  const BenchStats large = bench_forward(m, 256, 256, 5, 1, 2);
  EXPECT_EQ(small.iters, 5);
  EXPECT_LE(small.p50_ms, small.p95_ms);
  EXPECT_GE(large.p50_ms, small.p50_ms);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto data = synth("cli_cfg");
  const auto manifest = (data / "manifest.tsv").string();
  const auto out = testing::scratch_dir("cli_cfg_out").string();
  EXPECT_EQ(run({"train", "--train-manifest", manifest, "--output-dir", out, "--set", "colour=blue"}).code,
            kExitConfig);
  EXPECT_EQ(run({"train", "--train-manifest", manifest, "--output-dir", out, "--set", "lr=abc"}).code, kExitConfig);
  EXPECT_EQ(run({"train", "--train-manifest", manifest, "--output-dir", out, "--set", "fam_rates=2,3"}).code,
            kExitConfig);
  const auto cfg = testing::scratch_dir("cli_cfg_file") / "bad.cfg";
  {
    std::ofstream f(cfg);
    f << "# comment\nunknown_key = 3\n";
  }
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--train-manifest", manifest, "--output-dir", out}).code,
            kExitConfig);
  EXPECT_EQ(run({"train", "--config", "/nonexistent.cfg", "--train-manifest", manifest, "--output-dir", out}).code,
            kExitConfig);
}

TEST(Cli, BadDataExitsThree) {
  const auto dir = testing::scratch_dir("cli_bad_data");
  {
    std::ofstream(dir / "broken.ppm") << "P6\n4 4\n255\nxx";
    std::ofstream(dir / "broken.pgm") << "P5\n4 4\n255\n";
    std::ofstream(dir / "m.tsv") << "broken.ppm\tbroken.pgm\n";
  }
  const auto r = run(with_tiny({"train", "--train-manifest", (dir / "m.tsv").string(), "--output-dir",
                                (dir / "out").string(), "--epochs", "1"}));
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("broken"), std::string::npos);
}

TEST(Cli, SynthIsDeterministic) {
  const auto a = synth("cli_synth_a");
  const auto b = synth("cli_synth_b");
  EXPECT_TRUE(slurp(a / "img_0001.ppm") == slurp(b / "img_0001.ppm"));
  EXPECT_TRUE(slurp(a / "gt_0003.pgm") == slurp(b / "gt_0003.pgm"));
}

}  // namespace
}  // namespace poolnet
