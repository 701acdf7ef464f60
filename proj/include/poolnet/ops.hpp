#pragma once

#include <optional>
#include <vector>

#include "poolnet/tensor.hpp"

namespace poolnet {

/// Cross-correlation. weight is [out_c, in_c, k, k] stored as a 4-d tensor;
/// bias, when given, is [1, out_c, 1, 1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int stride = 1, int padding = 0);

/// Mean over non-overlapping rate x rate blocks. H and W must be multiples of rate.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, int rate);

/// Mean over floor/ceil bins; output may be larger than the input, in which
/// case neighbouring bins share input cells.
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, int out_h, int out_w);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

/// Ties route the gradient to the first maximum in row-major order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int rate = 2);

/// Half-pixel (align-corners-false) bilinear sampling with edge clamping.
/// factor must be one of 1, 2, 4, 8, 16.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, int factor);

/// Same sampling convention as upsample_bilinear, to an arbitrary size.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, int out_h, int out_w);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product; either operand may be 1x1x1x1 and is then broadcast.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs);

/// Top-left window of size h x w.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, int h, int w);

/// Mirror along the width axis (no lineage; used for augmentation).
template <typename T>
Tensor<T> hflip(const Tensor<T>& x);

}  // namespace poolnet
