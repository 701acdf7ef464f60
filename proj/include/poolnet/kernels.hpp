#pragma once

// Raw NCHW compute kernels. Every kernel exists twice: `serial` holds the
// direct loop-nest reference used by tests and benchmarks, `parallel` holds
// the OpenMP version the autograd ops dispatch to. Both write every output
// element from exactly one thread in a fixed order, so results do not depend
// on the thread count.

#include <cstddef>

namespace poolnet::kernels {

struct ConvGeom {
  int batch = 1;
  int in_c = 1;
  int in_h = 1;
  int in_w = 1;
  int out_c = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Extents of a batch of planes: count = batch * channels.
struct PlaneGeom {
  int count = 1;
  int in_h = 1;
  int in_w = 1;
  int out_h = 1;
  int out_w = 1;
};

/// Half-open bin [begin, end) along one axis for adaptive pooling.
inline int adaptive_begin(int i, int in, int out) { return (i * in) / out; }
inline int adaptive_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

namespace serial {

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* in, const T* weight, const T* bias, T* out);
// Accumulates into grad_in / grad_weight / grad_bias; any may be null.
template <typename T>
void conv2d_backward(const ConvGeom& g, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out);
template <typename T>
void avg_pool_backward(const PlaneGeom& g, int rate, const T* grad_out, T* grad_in);

template <typename T>
void adaptive_avg_pool_forward(const PlaneGeom& g, const T* in, T* out);
template <typename T>
void adaptive_avg_pool_backward(const PlaneGeom& g, const T* grad_out, T* grad_in);

// argmax receives the flat in-plane index of each output's winner.
template <typename T>
void max_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out, int* argmax);
template <typename T>
void max_pool_backward(const PlaneGeom& g, const int* argmax, const T* grad_out, T* grad_in);

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, const T* in, T* out);
template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, const T* grad_out, T* grad_in);

}  // namespace serial

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* in, const T* weight, const T* bias, T* out);
template <typename T>
void conv2d_backward(const ConvGeom& g, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out);
template <typename T>
void avg_pool_backward(const PlaneGeom& g, int rate, const T* grad_out, T* grad_in);

template <typename T>
void adaptive_avg_pool_forward(const PlaneGeom& g, const T* in, T* out);
template <typename T>
void adaptive_avg_pool_backward(const PlaneGeom& g, const T* grad_out, T* grad_in);

template <typename T>
void max_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out, int* argmax);
template <typename T>
void max_pool_backward(const PlaneGeom& g, const int* argmax, const T* grad_out, T* grad_in);

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, const T* in, T* out);
template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, const T* grad_out, T* grad_in);

// C[m x n] (+)= A[m x k] * B[k x n], row-major.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c);
// C[m x n] = A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c);

}  // namespace parallel

/// Caps the OpenMP team size for all parallel kernels (<= 0 restores the
/// runtime default).
void set_max_threads(int threads);
int max_threads();

}  // namespace poolnet::kernels
