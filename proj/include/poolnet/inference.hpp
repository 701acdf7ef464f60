#pragma once

#include <vector>

#include "poolnet/dataset.hpp"
#include "poolnet/metrics.hpp"
#include "poolnet/model.hpp"

namespace poolnet {

template <typename T>
struct Prediction {
  Tensor<T> saliency;               // 1x1xHxW probabilities at original size
  std::vector<Tensor<T>> edges;     // same, one per edge side output
};

/// Pads, runs the model without recording lineage, applies sigmoid and crops
/// back to the sample's original size.
template <typename T>
Prediction<T> predict(const PoolNet<T>& model, const Sample<T>& sample);

/// MaxF / MAE / PR curve of the model's saliency predictions.
template <typename T>
MetricsRecord evaluate_model(const PoolNet<T>& model, const std::vector<Sample<T>>& samples);

}  // namespace poolnet
