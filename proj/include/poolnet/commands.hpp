#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "poolnet/dataset.hpp"
#include "poolnet/run_config.hpp"

namespace poolnet {

/// Process exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Entry point shared by the executable and the tests. args excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct AblationRow {
  int row = 0;
  bool ppm = false;
  bool ggf = false;
  bool fam = false;
  std::vector<double> max_f;  // one per seed
  std::vector<double> mae;
  double median_max_f = 0.0;
  double median_mae = 0.0;
};

/// Trains and evaluates the requested ablation rows (1..6) once per seed.
/// Seed k uses base.train.seed + k for both initialisation and augmentation.
std::vector<AblationRow> run_ablation(const RunConfig& base,
                                      const std::vector<Sample<float>>& train,
                                      const std::vector<Sample<float>>& eval,
                                      const std::vector<int>& rows, int seeds,
                                      std::ostream* progress = nullptr);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

struct BenchStats {
  int width = 0;
  int height = 0;
  int iters = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
};

/// Wall-clock forward latency on a random image; warm-up runs are not timed.
BenchStats bench_forward(const PoolNet<float>& model, int width, int height, int iters,
                         int warmup, std::uint64_t seed);

double median(std::vector<double> values);

}  // namespace poolnet
