#include "poolnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace poolnet {

namespace {

template <typename M>
M make_map(int width, int height, std::vector<double> values, const char* what) {
  if (width < 1 || height < 1) throw std::invalid_argument(std::string(what) + ": empty map");
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument(std::string(what) + ": value count does not match dims");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(what) + ": value outside [0, 1]");
    }
  }
  M m;
  m.width = width;
  m.height = height;
  m.values = std::move(values);
  return m;
}

void check_dims(const SaliencyMap& s, const GroundTruth& g) {
  if (s.width != g.width || s.height != g.height) {
    throw std::invalid_argument("saliency map " + std::to_string(s.width) + "x" +
                                std::to_string(s.height) + " vs ground truth " +
                                std::to_string(g.width) + "x" + std::to_string(g.height));
  }
}

double threshold(int t) { return static_cast<double>(t) / 255.0; }

// Largest t with threshold(t) <= v, i.e. the last threshold at which the
// pixel is still predicted positive.
int last_positive_threshold(double v) {
  int t = std::clamp(static_cast<int>(std::floor(v * 255.0)), 0, kThresholds - 1);
  while (t + 1 < kThresholds && threshold(t + 1) <= v) ++t;
  while (t > 0 && threshold(t) > v) --t;
  return t;
}

struct ImageCounts {
  std::array<long, kThresholds> tp{};
  std::array<long, kThresholds> fp{};
  long positives = 0;
};

ImageCounts count_image(const SaliencyMap& s, const GroundTruth& g) {
  std::array<long, kThresholds + 1> pos_hist{};
  std::array<long, kThresholds + 1> neg_hist{};
  ImageCounts c;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const int t = last_positive_threshold(s.values[i]);
    if (g.positive(i)) {
      ++pos_hist[t];
      ++c.positives;
    } else {
      ++neg_hist[t];
    }
  }
  long tp = 0;
  long fp = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    tp += pos_hist[t];
    fp += neg_hist[t];
    c.tp[t] = tp;
    c.fp[t] = fp;
  }
  return c;
}

}  // namespace

SaliencyMap SaliencyMap::from(int width, int height, std::vector<double> values) {
  return make_map<SaliencyMap>(width, height, std::move(values), "SaliencyMap");
}

GroundTruth GroundTruth::from(int width, int height, std::vector<double> values) {
  return make_map<GroundTruth>(width, height, std::move(values), "GroundTruth");
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

double mae(const SaliencyMap& s, const GroundTruth& g) {
  check_dims(s, g);
  double total = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) total += std::abs(s.values[i] - g.values[i]);
  return total / static_cast<double>(s.values.size());
}

PrCurve pr_sweep(const std::vector<MapPair>& maps) {
  if (maps.empty()) throw std::invalid_argument("pr_sweep: no images");
  const long n = static_cast<long>(maps.size());
  std::vector<ImageCounts> counts(maps.size());
  std::vector<int> error(maps.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& [s, g] = maps[static_cast<std::size_t>(i)];
    if (s.width != g.width || s.height != g.height) {
      error[static_cast<std::size_t>(i)] = 1;
      continue;
    }
    counts[static_cast<std::size_t>(i)] = count_image(s, g);
  }
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (error[i]) check_dims(maps[i].first, maps[i].second);
  }

  // Reduce in input order so the result does not depend on scheduling.
  PrCurve curve;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].positives == 0) curve.empty_gt_images.push_back(i);
  }
  for (int t = 0; t < kThresholds; ++t) {
    double p_sum = 0.0;
    double r_sum = 0.0;
    int r_count = 0;
    for (const auto& c : counts) {
      const long predicted = c.tp[t] + c.fp[t];
      p_sum += predicted == 0 ? 1.0 : static_cast<double>(c.tp[t]) / predicted;
      if (c.positives > 0) {
        r_sum += static_cast<double>(c.tp[t]) / c.positives;
        ++r_count;
      }
    }
    PrPoint& pt = curve.points[static_cast<std::size_t>(t)];
    pt.threshold = threshold(t);
    pt.precision = p_sum / static_cast<double>(counts.size());
    pt.recall = r_count > 0 ? r_sum / r_count : 0.0;
    pt.recall_images = r_count;
  }
  return curve;
}

double max_f(const PrCurve& curve, double beta2) {
  double best = 0.0;
  for (const auto& pt : curve.points) best = std::max(best, f_measure(pt.precision, pt.recall, beta2));
  return best;
}

MetricsRecord evaluate(const std::vector<MapPair>& maps) {
  MetricsRecord rec;
  rec.curve = pr_sweep(maps);
  rec.max_f = max_f(rec.curve);
  double total = 0.0;
  for (const auto& [s, g] : maps) total += mae(s, g);
  rec.mae = total / static_cast<double>(maps.size());
  return rec;
}

void write_metrics_csv(std::ostream& out, const MetricsRecord& record) {
  out << std::setprecision(10);
  out << "max_f,mae\n" << record.max_f << "," << record.mae << "\n";
  out << "threshold,precision,recall\n";
  for (const auto& pt : record.curve.points) {
    out << pt.threshold << "," << pt.precision << "," << pt.recall << "\n";
  }
  if (!record.curve.empty_gt_images.empty()) {
    out << "# empty ground truth (excluded from recall):";
    for (auto i : record.curve.empty_gt_images) out << " " << i;
    out << "\n";
  }
}

}  // namespace poolnet
