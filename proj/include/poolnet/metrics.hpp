#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

namespace poolnet {

/// Row-major single-channel map with values in [0, 1].
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  /// Validates dims and range; throws std::invalid_argument.
  static SaliencyMap from(int width, int height, std::vector<double> values);
};

/// Same layout as SaliencyMap. Pixels >= 0.5 count as foreground.
struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  static GroundTruth from(int width, int height, std::vector<double> values);
  bool positive(std::size_t i) const { return values[i] >= 0.5; }
};

inline constexpr int kThresholds = 256;
inline constexpr double kBeta2 = 0.3;

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  // Images that contributed to the recall average at this threshold.
  int recall_images = 0;
};

struct PrCurve {
  std::array<PrPoint, kThresholds> points{};
  // Indices of images whose ground truth has no foreground; they are left
  // out of every recall average.
  std::vector<std::size_t> empty_gt_images;
};

struct MetricsRecord {
  double max_f = 0.0;
  double mae = 0.0;
  PrCurve curve;
};

using MapPair = std::pair<SaliencyMap, GroundTruth>;

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
double f_measure(double precision, double recall, double beta2 = kBeta2);

double mae(const SaliencyMap& s, const GroundTruth& g);

/// Per-image precision/recall at thresholds t/255 (s >= t is positive),
/// averaged over images. An empty prediction has precision 1.
PrCurve pr_sweep(const std::vector<MapPair>& maps);

double max_f(const PrCurve& curve, double beta2 = kBeta2);

/// MaxF over the averaged curve plus mean per-image MAE.
MetricsRecord evaluate(const std::vector<MapPair>& maps);

/// Summary header + row, then a "threshold,precision,recall" block of 256 rows.
void write_metrics_csv(std::ostream& out, const MetricsRecord& record);

}  // namespace poolnet
