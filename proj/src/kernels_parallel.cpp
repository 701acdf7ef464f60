#include <algorithm>
#include <cstring>
#include <vector>

#include "poolnet/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poolnet::kernels {

namespace {
int g_default_threads = 0;
}

void set_max_threads(int threads) {
#ifdef _OPENMP
  if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : g_default_threads);
#else
  (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

constexpr int kColBlock = 256;

// Columns of the im2col matrix are output pixels; rows are (c, ky, kx).
template <typename T>
void im2col(const ConvGeom& g, const T* in, T* cols) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int rows = g.in_c * g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (g.kernel * g.kernel);
    const int ky = (r / g.kernel) % g.kernel;
    const int kx = r % g.kernel;
    const T* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    T* dst = cols + static_cast<std::size_t>(r) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.pad + ky;
      T* row = dst + y * ow;
      if (iy < 0 || iy >= g.in_h) {
        std::fill(row, row + ow, T(0));
        continue;
      }
      for (int x = 0; x < ow; ++x) {
        const int ix = x * g.stride - g.pad + kx;
        row[x] = (ix < 0 || ix >= g.in_w) ? T(0) : plane[iy * g.in_w + ix];
      }
    }
  }
}

// Accumulates columns back into the input gradient. Rows of one channel are
// handled by one thread so writes never race.
template <typename T>
void col2im_acc(const ConvGeom& g, const T* cols, T* grad_in) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_c; ++c) {
    T* plane = grad_in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int k = 0; k < kk; ++k) {
      const int ky = k / g.kernel;
      const int kx = k % g.kernel;
      const T* src = cols + static_cast<std::size_t>(c * kk + k) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int x = 0; x < ow; ++x) {
          const int ix = x * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          plane[iy * g.in_w + ix] += src[y * ow + x];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  const int row_blocks = (m + 3) / 4;
  const int col_blocks = (n + kColBlock - 1) / kColBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int rb = 0; rb < row_blocks; ++rb) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int i0 = rb * 4;
      const int i1 = std::min(i0 + 4, m);
      const int j0 = cb * kColBlock;
      const int len = std::min(kColBlock, n - j0);
      T acc[4][kColBlock];
      for (int i = i0; i < i1; ++i) {
        if (accumulate) {
          std::memcpy(acc[i - i0], c + static_cast<std::size_t>(i) * n + j0, len * sizeof(T));
        } else {
          std::fill(acc[i - i0], acc[i - i0] + len, T(0));
        }
      }
      if (i1 - i0 == 4) {
        for (int p = 0; p < k; ++p) {
          const T* brow = b + static_cast<std::size_t>(p) * n + j0;
          const T a0 = a[static_cast<std::size_t>(i0) * k + p];
          const T a1 = a[static_cast<std::size_t>(i0 + 1) * k + p];
          const T a2 = a[static_cast<std::size_t>(i0 + 2) * k + p];
          const T a3 = a[static_cast<std::size_t>(i0 + 3) * k + p];
#pragma omp simd
          for (int j = 0; j < len; ++j) {
            const T bv = brow[j];
            acc[0][j] += a0 * bv;
            acc[1][j] += a1 * bv;
            acc[2][j] += a2 * bv;
            acc[3][j] += a3 * bv;
          }
        }
      } else {
        for (int p = 0; p < k; ++p) {
          const T* brow = b + static_cast<std::size_t>(p) * n + j0;
          for (int i = i0; i < i1; ++i) {
            const T av = a[static_cast<std::size_t>(i) * k + p];
            T* arow = acc[i - i0];
#pragma omp simd
            for (int j = 0; j < len; ++j) arow[j] += av * brow[j];
          }
        }
      }
      for (int i = i0; i < i1; ++i) {
        std::memcpy(c + static_cast<std::size_t>(i) * n + j0, acc[i - i0], len * sizeof(T));
      }
    }
  }
}

template <typename T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const T* arow = a + static_cast<std::size_t>(i) * k;
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<std::size_t>(i) * n + j] += s;
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
  const int col_blocks = (n + kColBlock - 1) / kColBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int j0 = cb * kColBlock;
      const int len = std::min(kColBlock, n - j0);
      T* crow = c + static_cast<std::size_t>(i) * n + j0;
      std::fill(crow, crow + len, T(0));
      for (int p = 0; p < k; ++p) {
        const T av = a[static_cast<std::size_t>(p) * m + i];
        const T* brow = b + static_cast<std::size_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < len; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* in, const T* weight, const T* bias, T* out) {
  const int pixels = g.out_h() * g.out_w();
  const int depth = g.in_c * g.kernel * g.kernel;
  std::vector<T> cols;
  if (!is_pointwise(g)) cols.resize(static_cast<std::size_t>(depth) * pixels);
  for (int n = 0; n < g.batch; ++n) {
    const T* src = in + static_cast<std::size_t>(n) * g.in_c * g.in_h * g.in_w;
    T* dst = out + static_cast<std::size_t>(n) * g.out_c * pixels;
    if (bias != nullptr) {
      for (int o = 0; o < g.out_c; ++o) std::fill(dst + o * pixels, dst + (o + 1) * pixels, bias[o]);
    }
    const T* rhs = src;
    if (!is_pointwise(g)) {
      im2col(g, src, cols.data());
      rhs = cols.data();
    }
    gemm_nn(g.out_c, pixels, depth, weight, rhs, dst, bias != nullptr);
  }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  const int pixels = g.out_h() * g.out_w();
  const int depth = g.in_c * g.kernel * g.kernel;
  std::vector<T> cols;
  std::vector<T> grad_cols;
  if (!is_pointwise(g)) cols.resize(static_cast<std::size_t>(depth) * pixels);
  if (grad_in != nullptr) grad_cols.resize(static_cast<std::size_t>(depth) * pixels);
  for (int n = 0; n < g.batch; ++n) {
    const T* src = in + static_cast<std::size_t>(n) * g.in_c * g.in_h * g.in_w;
    const T* go = grad_out + static_cast<std::size_t>(n) * g.out_c * pixels;
    if (grad_bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < g.out_c; ++o) {
        T s = 0;
        for (int p = 0; p < pixels; ++p) s += go[o * pixels + p];
        grad_bias[o] += s;
      }
    }
    if (grad_weight != nullptr) {
      const T* rhs = src;
      if (!is_pointwise(g)) {
        im2col(g, src, cols.data());
        rhs = cols.data();
      }
      gemm_nt_acc(g.out_c, depth, pixels, go, rhs, grad_weight);
    }
    if (grad_in != nullptr) {
      T* gi = grad_in + static_cast<std::size_t>(n) * g.in_c * g.in_h * g.in_w;
      gemm_tn(depth, pixels, g.out_c, weight, go, grad_cols.data());
      if (is_pointwise(g)) {
        const std::size_t total = static_cast<std::size_t>(depth) * pixels;
#pragma omp parallel for simd schedule(static)
        for (std::size_t i = 0; i < total; ++i) gi[i] += grad_cols[i];
      } else {
        col2im_acc(g, grad_cols.data(), gi);
      }
    }
  }
}

template <typename T>
void avg_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out) {
  const T inv = T(1) / static_cast<T>(rate * rate);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    const T* plane = in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    T* dst = out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      for (int x = 0; x < g.out_w; ++x) {
        T acc = 0;
        for (int dy = 0; dy < rate; ++dy) {
          const T* row = plane + (y * rate + dy) * g.in_w + x * rate;
          for (int dx = 0; dx < rate; ++dx) acc += row[dx];
        }
        dst[y * g.out_w + x] = acc * inv;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const PlaneGeom& g, int rate, const T* grad_out, T* grad_in) {
  const T inv = T(1) / static_cast<T>(rate * rate);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    T* plane = grad_in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const T* src = grad_out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int iy = 0; iy < g.in_h; ++iy) {
      const T* srow = src + (iy / rate) * g.out_w;
      T* drow = plane + iy * g.in_w;
      for (int ix = 0; ix < g.in_w; ++ix) drow[ix] += srow[ix / rate] * inv;
    }
  }
}

template <typename T>
void adaptive_avg_pool_forward(const PlaneGeom& g, const T* in, T* out) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    const T* plane = in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    T* dst = out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      const int y0 = adaptive_begin(y, g.in_h, g.out_h);
      const int y1 = adaptive_end(y, g.in_h, g.out_h);
      for (int x = 0; x < g.out_w; ++x) {
        const int x0 = adaptive_begin(x, g.in_w, g.out_w);
        const int x1 = adaptive_end(x, g.in_w, g.out_w);
        T acc = 0;
        for (int iy = y0; iy < y1; ++iy) {
          for (int ix = x0; ix < x1; ++ix) acc += plane[iy * g.in_w + ix];
        }
        dst[y * g.out_w + x] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool_backward(const PlaneGeom& g, const T* grad_out, T* grad_in) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    T* plane = grad_in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const T* src = grad_out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      const int y0 = adaptive_begin(y, g.in_h, g.out_h);
      const int y1 = adaptive_end(y, g.in_h, g.out_h);
      for (int x = 0; x < g.out_w; ++x) {
        const int x0 = adaptive_begin(x, g.in_w, g.out_w);
        const int x1 = adaptive_end(x, g.in_w, g.out_w);
        const T go = src[y * g.out_w + x] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (int iy = y0; iy < y1; ++iy) {
          for (int ix = x0; ix < x1; ++ix) plane[iy * g.in_w + ix] += go;
        }
      }
    }
  }
}

template <typename T>
void max_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out, int* argmax) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    const T* plane = in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const std::size_t base = static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      for (int x = 0; x < g.out_w; ++x) {
        int best = y * rate * g.in_w + x * rate;
        T best_v = plane[best];
        for (int dy = 0; dy < rate; ++dy) {
          for (int dx = 0; dx < rate; ++dx) {
            const int idx = (y * rate + dy) * g.in_w + x * rate + dx;
            if (plane[idx] > best_v) {
              best_v = plane[idx];
              best = idx;
            }
          }
        }
        out[base + y * g.out_w + x] = best_v;
        argmax[base + y * g.out_w + x] = best;
      }
    }
  }
}

template <typename T>
void max_pool_backward(const PlaneGeom& g, const int* argmax, const T* grad_out, T* grad_in) {
  const int out_plane = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    T* plane = grad_in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const std::size_t base = static_cast<std::size_t>(p) * out_plane;
    for (int i = 0; i < out_plane; ++i) plane[argmax[base + i]] += grad_out[base + i];
  }
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    const int i0 = std::min(static_cast<int>(src), in - 1);
    taps[d] = Tap{i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, const T* in, T* out) {
  const auto ty = bilinear_taps(g.in_h, g.out_h);
  const auto tx = bilinear_taps(g.in_w, g.out_w);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    const T* plane = in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    T* dst = out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      const T* r0 = plane + ty[y].i0 * g.in_w;
      const T* r1 = plane + ty[y].i1 * g.in_w;
      for (int x = 0; x < g.out_w; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T top = r0[tx[x].i0] * (T(1) - fx) + r0[tx[x].i1] * fx;
        const T bot = r1[tx[x].i0] * (T(1) - fx) + r1[tx[x].i1] * fx;
        dst[y * g.out_w + x] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
}

template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, const T* grad_out, T* grad_in) {
  const auto ty = bilinear_taps(g.in_h, g.out_h);
  const auto tx = bilinear_taps(g.in_w, g.out_w);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.count; ++p) {
    T* plane = grad_in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const T* src = grad_out + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (int y = 0; y < g.out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      T* r0 = plane + ty[y].i0 * g.in_w;
      T* r1 = plane + ty[y].i1 * g.in_w;
      for (int x = 0; x < g.out_w; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T go = src[y * g.out_w + x];
        r0[tx[x].i0] += go * (T(1) - fy) * (T(1) - fx);
        r0[tx[x].i1] += go * (T(1) - fy) * fx;
        r1[tx[x].i0] += go * fy * (T(1) - fx);
        r1[tx[x].i1] += go * fy * fx;
      }
    }
  }
}

#define POOLNET_INSTANTIATE(T)                                                               \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                     \
  template void gemm_nt_acc<T>(int, int, int, const T*, const T*, T*);                       \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*);                           \
  template void conv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);        \
  template void conv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*,   \
                                   T*);                                                      \
  template void avg_pool_forward<T>(const PlaneGeom&, int, const T*, T*);                    \
  template void avg_pool_backward<T>(const PlaneGeom&, int, const T*, T*);                   \
  template void adaptive_avg_pool_forward<T>(const PlaneGeom&, const T*, T*);                \
  template void adaptive_avg_pool_backward<T>(const PlaneGeom&, const T*, T*);               \
  template void max_pool_forward<T>(const PlaneGeom&, int, const T*, T*, int*);              \
  template void max_pool_backward<T>(const PlaneGeom&, const int*, const T*, T*);            \
  template void resize_bilinear_forward<T>(const PlaneGeom&, const T*, T*);                  \
  template void resize_bilinear_backward<T>(const PlaneGeom&, const T*, T*);

POOLNET_INSTANTIATE(float)
POOLNET_INSTANTIATE(double)

#undef POOLNET_INSTANTIATE

}  // namespace parallel
}  // namespace poolnet::kernels
