#include "poolnet/losses.hpp"

#include <cmath>

namespace poolnet {

namespace {

template <typename T>
void check_pair(const Tensor<T>& logits, const Tensor<T>& target, const char* op) {
  if (logits.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": logits " + logits.shape().str() + " vs target " +
                     target.shape().str());
  }
}

template <typename T>
T stable_bce(T x, T g) {
  return std::max(x, T(0)) - x * g + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Per-pixel weights w_i; loss = sum_i w_i * bce(x_i, g_i) / N.
template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& logits, const Tensor<T>& target, T pos_weight,
                       T neg_weight, const char* op) {
  auto x = logits.data();
  auto g = target.data();
  const T inv_n = T(1) / static_cast<T>(x.size());
  T total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T w = g[i] >= T(0.5) ? pos_weight : neg_weight;
    total += w * stable_bce(x[i], g[i]);
  }
  auto li = logits.impl_ptr();
  auto ti = target.impl_ptr();
  return make_result<T>(Shape{1, 1, 1, 1}, {total * inv_n}, op, {logits},
                        [li, ti, pos_weight, neg_weight, inv_n](std::span<const T> go) {
                          auto& gx = li->grad_buffer();
                          const auto& xs = li->data;
                          const auto& gs = ti->data;
                          for (std::size_t i = 0; i < xs.size(); ++i) {
                            const T w = gs[i] >= T(0.5) ? pos_weight : neg_weight;
                            gx[i] += go[0] * w * inv_n * (stable_sigmoid(xs[i]) - gs[i]);
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_pair(logits, target, "bce_loss");
  return weighted_bce(logits, target, T(1), T(1), "bce_loss");
}

template <typename T>
Tensor<T> balanced_bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_pair(logits, target, "balanced_bce_loss");
  std::size_t positives = 0;
  for (T v : target.data()) positives += v >= T(0.5) ? 1 : 0;
  const std::size_t n = target.numel();
  if (positives == 0 || positives == n) {
    return weighted_bce(logits, target, T(1), T(1), "balanced_bce_loss");
  }
  const T pos_w = static_cast<T>(n - positives) / static_cast<T>(n);
  const T neg_w = static_cast<T>(positives) / static_cast<T>(n);
  return weighted_bce(logits, target, pos_w, neg_w, "balanced_bce_loss");
}

template Tensor<float> bce_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> balanced_bce_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> balanced_bce_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace poolnet
