#pragma once

#include "poolnet/tensor.hpp"

namespace poolnet {

/// Mean binary cross entropy on logits, evaluated as
/// max(x, 0) - x * g + log(1 + exp(-|x|)).
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

/// Class-balanced binary cross entropy for binary edge targets: positives
/// are weighted by N-/N, negatives by N+/N, and the weighted sum is divided
/// by N. A target with only one class falls back to plain mean BCE.
template <typename T>
Tensor<T> balanced_bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

}  // namespace poolnet
