#include <algorithm>
#include <cmath>

#include "poolnet/kernels.hpp"

namespace poolnet::kernels::serial {

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* in, const T* weight, const T* bias, T* out) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_c; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          T acc = bias != nullptr ? bias[o] : T(0);
          for (int c = 0; c < g.in_c; ++c) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = y * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = x * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                acc += in[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix] *
                       weight[((o * g.in_c + c) * g.kernel + ky) * g.kernel + kx];
              }
            }
          }
          out[((n * g.out_c + o) * oh + y) * ow + x] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_c; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const T go = grad_out[((n * g.out_c + o) * oh + y) * ow + x];
          if (grad_bias != nullptr) grad_bias[o] += go;
          for (int c = 0; c < g.in_c; ++c) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = y * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = x * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                const int ii = ((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix;
                const int wi = ((o * g.in_c + c) * g.kernel + ky) * g.kernel + kx;
                if (grad_in != nullptr) grad_in[ii] += go * weight[wi];
                if (grad_weight != nullptr) grad_weight[wi] += go * in[ii];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void avg_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out) {
  const T inv = T(1) / static_cast<T>(rate * rate);
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      for (int x = 0; x < g.out_w; ++x) {
        T acc = 0;
        for (int dy = 0; dy < rate; ++dy) {
          for (int dx = 0; dx < rate; ++dx) {
            acc += in[(p * g.in_h + y * rate + dy) * g.in_w + x * rate + dx];
          }
        }
        out[(p * g.out_h + y) * g.out_w + x] = acc * inv;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const PlaneGeom& g, int rate, const T* grad_out, T* grad_in) {
  const T inv = T(1) / static_cast<T>(rate * rate);
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      for (int x = 0; x < g.out_w; ++x) {
        const T go = grad_out[(p * g.out_h + y) * g.out_w + x] * inv;
        for (int dy = 0; dy < rate; ++dy) {
          for (int dx = 0; dx < rate; ++dx) {
            grad_in[(p * g.in_h + y * rate + dy) * g.in_w + x * rate + dx] += go;
          }
        }
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool_forward(const PlaneGeom& g, const T* in, T* out) {
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      const int y0 = adaptive_begin(y, g.in_h, g.out_h);
      const int y1 = adaptive_end(y, g.in_h, g.out_h);
      for (int x = 0; x < g.out_w; ++x) {
        const int x0 = adaptive_begin(x, g.in_w, g.out_w);
        const int x1 = adaptive_end(x, g.in_w, g.out_w);
        T acc = 0;
        for (int iy = y0; iy < y1; ++iy) {
          for (int ix = x0; ix < x1; ++ix) acc += in[(p * g.in_h + iy) * g.in_w + ix];
        }
        out[(p * g.out_h + y) * g.out_w + x] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool_backward(const PlaneGeom& g, const T* grad_out, T* grad_in) {
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      const int y0 = adaptive_begin(y, g.in_h, g.out_h);
      const int y1 = adaptive_end(y, g.in_h, g.out_h);
      for (int x = 0; x < g.out_w; ++x) {
        const int x0 = adaptive_begin(x, g.in_w, g.out_w);
        const int x1 = adaptive_end(x, g.in_w, g.out_w);
        const T go = grad_out[(p * g.out_h + y) * g.out_w + x] /
                     static_cast<T>((y1 - y0) * (x1 - x0));
        for (int iy = y0; iy < y1; ++iy) {
          for (int ix = x0; ix < x1; ++ix) grad_in[(p * g.in_h + iy) * g.in_w + ix] += go;
        }
      }
    }
  }
}

template <typename T>
void max_pool_forward(const PlaneGeom& g, int rate, const T* in, T* out, int* argmax) {
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      for (int x = 0; x < g.out_w; ++x) {
        int best = (y * rate) * g.in_w + x * rate;
        T best_v = in[p * g.in_h * g.in_w + best];
        for (int dy = 0; dy < rate; ++dy) {
          for (int dx = 0; dx < rate; ++dx) {
            const int idx = (y * rate + dy) * g.in_w + x * rate + dx;
            const T v = in[p * g.in_h * g.in_w + idx];
            if (v > best_v) {
              best_v = v;
              best = idx;
            }
          }
        }
        out[(p * g.out_h + y) * g.out_w + x] = best_v;
        argmax[(p * g.out_h + y) * g.out_w + x] = best;
      }
    }
  }
}

template <typename T>
void max_pool_backward(const PlaneGeom& g, const int* argmax, const T* grad_out, T* grad_in) {
  for (int p = 0; p < g.count; ++p) {
    for (int i = 0; i < g.out_h * g.out_w; ++i) {
      grad_in[p * g.in_h * g.in_w + argmax[p * g.out_h * g.out_w + i]] +=
          grad_out[p * g.out_h * g.out_w + i];
    }
  }
}

namespace {

// Half-pixel source coordinate, clamped at the low edge.
template <typename T>
void bilinear_tap(int dst, int in, int out, int& i0, int& i1, T& frac) {
  const T scale = static_cast<T>(in) / static_cast<T>(out);
  T src = (static_cast<T>(dst) + T(0.5)) * scale - T(0.5);
  if (src < T(0)) src = T(0);
  i0 = std::min(static_cast<int>(src), in - 1);
  i1 = std::min(i0 + 1, in - 1);
  frac = src - static_cast<T>(i0);
}

}  // namespace

template <typename T>
void resize_bilinear_forward(const PlaneGeom& g, const T* in, T* out) {
  for (int p = 0; p < g.count; ++p) {
    for (int y = 0; y < g.out_h; ++y) {
      int y0, y1;
      T fy;
      bilinear_tap(y, g.in_h, g.out_h, y0, y1, fy);
      for (int x = 0; x < g.out_w; ++x) {
        int x0, x1;
        T fx;
        bilinear_tap(x, g.in_w, g.out_w, x0, x1, fx);
        const T* plane = in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
        const T top = plane[y0 * g.in_w + x0] * (T(1) - fx) + plane[y0 * g.in_w + x1] * fx;
        const T bot = plane[y1 * g.in_w + x0] * (T(1) - fx) + plane[y1 * g.in_w + x1] * fx;
        out[(p * g.out_h + y) * g.out_w + x] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
}

template <typename T>
void resize_bilinear_backward(const PlaneGeom& g, const T* grad_out, T* grad_in) {
  for (int p = 0; p < g.count; ++p) {
    T* plane = grad_in + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    for (int y = 0; y < g.out_h; ++y) {
      int y0, y1;
      T fy;
      bilinear_tap(y, g.in_h, g.out_h, y0, y1, fy);
      for (int x = 0; x < g.out_w; ++x) {
        int x0, x1;
        T fx;
        bilinear_tap(x, g.in_w, g.out_w, x0, x1, fx);
        const T go = grad_out[(p * g.out_h + y) * g.out_w + x];
        plane[y0 * g.in_w + x0] += go * (T(1) - fy) * (T(1) - fx);
        plane[y0 * g.in_w + x1] += go * (T(1) - fy) * fx;
        plane[y1 * g.in_w + x0] += go * fy * (T(1) - fx);
        plane[y1 * g.in_w + x1] += go * fy * fx;
      }
    }
  }
}

#define POOLNET_INSTANTIATE(T)                                                               \
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

}  // namespace poolnet::kernels::serial
