#include "poolnet/inference.hpp"

#include "poolnet/ops.hpp"

namespace poolnet {

template <typename T>
Prediction<T> predict(const PoolNet<T>& model, const Sample<T>& sample) {
  NoGradGuard no_grad;
  const Sample<T> padded = pad_to_multiple(sample, 16);
  ModelOutput<T> out = model.forward(padded.image);
  Prediction<T> p;
  p.saliency = crop_to_original(sigmoid(out.saliency_logits), padded);
  for (const auto& e : out.edge_logits) p.edges.push_back(crop_to_original(sigmoid(e), padded));
  return p;
}

template <typename T>
MetricsRecord evaluate_model(const PoolNet<T>& model, const std::vector<Sample<T>>& samples) {
  std::vector<MapPair> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) {
    Prediction<T> p = predict(model, s);
    pairs.emplace_back(to_saliency_map(p.saliency), to_ground_truth(s.target));
  }
  return evaluate(pairs);
}

template Prediction<float> predict(const PoolNet<float>&, const Sample<float>&);
template Prediction<double> predict(const PoolNet<double>&, const Sample<double>&);
template MetricsRecord evaluate_model(const PoolNet<float>&, const std::vector<Sample<float>>&);
template MetricsRecord evaluate_model(const PoolNet<double>&, const std::vector<Sample<double>>&);

}  // namespace poolnet
