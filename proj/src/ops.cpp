#include "poolnet/ops.hpp"

#include <cmath>
#include <string>

#include "poolnet/kernels.hpp"

namespace poolnet {

namespace k = kernels::parallel;

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

std::string dims(const Shape& s) { return s.str(); }

template <typename T>
kernels::PlaneGeom planes(const Tensor<T>& x, int out_h, int out_w) {
  const Shape& s = x.shape();
  return kernels::PlaneGeom{s.n * s.c, s.h, s.w, out_h, out_w};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int stride, int padding) {
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, weight is " + dims(ws));
  if (in.c != ws.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(in.c) +
                     " != weight in_channels " + std::to_string(ws.c) + " (input " +
                     dims(in) + ", weight " + dims(ws) + ")");
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (bias && bias->numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias->numel()) +
                     " entries, expected out_channels " + std::to_string(ws.n));
  }
  kernels::ConvGeom g{in.n, in.c, in.h, in.w, ws.n, ws.h, stride, padding};
  if (in.h + 2 * padding < ws.h || in.w + 2 * padding < ws.w) {
    throw ShapeError("conv2d: kernel " + std::to_string(ws.h) + " larger than padded input " +
                     dims(in));
  }
  Shape out{in.n, ws.n, g.out_h(), g.out_w()};
  std::vector<T> data(out.numel());
  k::conv2d_forward(g, input.data().data(), weight.data().data(),
                    bias ? bias->data().data() : nullptr, data.data());

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  ImplPtr<T> x = input.impl_ptr();
  ImplPtr<T> w = weight.impl_ptr();
  ImplPtr<T> b = bias ? bias->impl_ptr() : nullptr;
  return make_result<T>(out, std::move(data), "conv2d", std::move(inputs),
                        [g, x, w, b](std::span<const T> go) {
                          T* gi = x->requires_grad ? x->grad_buffer().data() : nullptr;
                          T* gw = w->requires_grad ? w->grad_buffer().data() : nullptr;
                          T* gb = (b && b->requires_grad) ? b->grad_buffer().data() : nullptr;
                          k::conv2d_backward(g, x->data.data(), w->data.data(), go.data(), gi,
                                             gw, gb);
                        });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, int rate) {
  const Shape& s = input.shape();
  if (rate < 1) throw ShapeError("avg_pool2d: rate must be >= 1");
  if (s.h % rate != 0 || s.w % rate != 0) {
    throw ShapeError("avg_pool2d: spatial size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by rate " + std::to_string(rate));
  }
  const auto g = planes(input, s.h / rate, s.w / rate);
  Shape out{s.n, s.c, g.out_h, g.out_w};
  std::vector<T> data(out.numel());
  k::avg_pool_forward(g, rate, input.data().data(), data.data());
  ImplPtr<T> x = input.impl_ptr();
  return make_result<T>(out, std::move(data), "avg_pool2d", {input},
                        [g, rate, x](std::span<const T> go) {
                          k::avg_pool_backward(g, rate, go.data(), x->grad_buffer().data());
                        });
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("adaptive_avg_pool2d: output size " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " must be >= 1");
  }
  const Shape& s = input.shape();
  const auto g = planes(input, out_h, out_w);
  Shape out{s.n, s.c, out_h, out_w};
  std::vector<T> data(out.numel());
  k::adaptive_avg_pool_forward(g, input.data().data(), data.data());
  ImplPtr<T> x = input.impl_ptr();
  return make_result<T>(out, std::move(data), "adaptive_avg_pool2d", {input},
                        [g, x](std::span<const T> go) {
                          k::adaptive_avg_pool_backward(g, go.data(), x->grad_buffer().data());
                        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  return adaptive_avg_pool2d(input, 1, 1);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int rate) {
  const Shape& s = input.shape();
  if (rate < 1) throw ShapeError("max_pool2d: rate must be >= 1");
  if (s.h % rate != 0 || s.w % rate != 0) {
    throw ShapeError("max_pool2d: spatial size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by rate " + std::to_string(rate));
  }
  const auto g = planes(input, s.h / rate, s.w / rate);
  Shape out{s.n, s.c, g.out_h, g.out_w};
  std::vector<T> data(out.numel());
  auto argmax = std::make_shared<std::vector<int>>(out.numel());
  k::max_pool_forward(g, rate, input.data().data(), data.data(), argmax->data());
  ImplPtr<T> x = input.impl_ptr();
  return make_result<T>(out, std::move(data), "max_pool2d", {input},
                        [g, argmax, x](std::span<const T> go) {
                          k::max_pool_backward(g, argmax->data(), go.data(),
                                               x->grad_buffer().data());
                        });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output size must be >= 1");
  const Shape& s = input.shape();
  if (s.h == out_h && s.w == out_w) {
    // Identity resize still needs lineage so gradients flow.
    ImplPtr<T> x = input.impl_ptr();
    std::vector<T> data(input.data().begin(), input.data().end());
    return make_result<T>(s, std::move(data), "resize_bilinear", {input},
                          [x](std::span<const T> go) {
                            auto& gi = x->grad_buffer();
                            for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                          });
  }
  const auto g = planes(input, out_h, out_w);
  Shape out{s.n, s.c, out_h, out_w};
  std::vector<T> data(out.numel());
  k::resize_bilinear_forward(g, input.data().data(), data.data());
  ImplPtr<T> x = input.impl_ptr();
  return make_result<T>(out, std::move(data), "resize_bilinear", {input},
                        [g, x](std::span<const T> go) {
                          k::resize_bilinear_backward(g, go.data(), x->grad_buffer().data());
                        });
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, int factor) {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8 && factor != 16) {
    throw ShapeError("upsample_bilinear: unsupported factor " + std::to_string(factor) +
                     " (expected 1, 2, 4, 8 or 16)");
  }
  return resize_bilinear(input, input.shape().h * factor, input.shape().w * factor);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto in = x.data();
  std::vector<T> data(in.size());
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < in.size(); ++i) data[i] = in[i] < T(0) ? T(0) : in[i];  // NaN passes through
  ImplPtr<T> xi = x.impl_ptr();
  return make_result<T>(x.shape(), std::move(data), "relu", {x}, [xi](std::span<const T> go) {
    auto& gi = xi->grad_buffer();
    const auto& v = xi->data;
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < go.size(); ++i) {
      if (v[i] > T(0)) gi[i] += go[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto in = x.data();
  auto out = std::make_shared<std::vector<T>>(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    // Branch on sign so exp never overflows.
    const T v = in[i];
    if (v >= T(0)) {
      (*out)[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      (*out)[i] = e / (T(1) + e);
    }
  }
  std::vector<T> data(*out);
  ImplPtr<T> xi = x.impl_ptr();
  return make_result<T>(x.shape(), std::move(data), "sigmoid", {x},
                        [xi, out](std::span<const T> go) {
                          auto& gi = xi->grad_buffer();
                          for (std::size_t i = 0; i < go.size(); ++i) {
                            const T s = (*out)[i];
                            gi[i] += go[i] * s * (T(1) - s);
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + dims(a.shape()) + " vs " + dims(b.shape()));
  }
  auto da = a.data();
  auto db = b.data();
  std::vector<T> data(da.size());
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < da.size(); ++i) data[i] = da[i] + db[i];
  ImplPtr<T> ai = a.impl_ptr();
  ImplPtr<T> bi = b.impl_ptr();
  return make_result<T>(a.shape(), std::move(data), "add", {a, b},
                        [ai, bi](std::span<const T> go) {
                          for (auto* t : {ai.get(), bi.get()}) {
                            if (!t->requires_grad) continue;
                            auto& g = t->grad_buffer();
                            for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + dims(a.shape()) + " vs " + dims(b.shape()));
  }
  const Shape out = a_scalar ? b.shape() : a.shape();
  const std::size_t n = out.numel();
  std::vector<T> data(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) data[i] = da[a_scalar ? 0 : i] * db[b_scalar ? 0 : i];
  ImplPtr<T> ai = a.impl_ptr();
  ImplPtr<T> bi = b.impl_ptr();
  return make_result<T>(out, std::move(data), "mul", {a, b},
                        [ai, bi, a_scalar, b_scalar](std::span<const T> go) {
                          if (ai->requires_grad) {
                            auto& g = ai->grad_buffer();
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              g[a_scalar ? 0 : i] += go[i] * bi->data[b_scalar ? 0 : i];
                            }
                          }
                          if (bi->requires_grad) {
                            auto& g = bi->grad_buffer();
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              g[b_scalar ? 0 : i] += go[i] * ai->data[a_scalar ? 0 : i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto in = x.data();
  std::vector<T> data(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) data[i] = in[i] * factor;
  ImplPtr<T> xi = x.impl_ptr();
  return make_result<T>(x.shape(), std::move(data), "scale", {x},
                        [xi, factor](std::span<const T> go) {
                          auto& g = xi->grad_buffer();
                          for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * factor;
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  ImplPtr<T> xi = x.impl_ptr();
  return make_result<T>(Shape{1, 1, 1, 1}, {total}, "sum", {x}, [xi](std::span<const T> go) {
    auto& g = xi->grad_buffer();
    for (auto& v : g) v += go[0];
  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = inputs.front().shape();
  int channels = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: batch/spatial mismatch " + dims(first) + " vs " +
                       dims(s));
    }
    channels += s.c;
  }
  Shape out{first.n, channels, first.h, first.w};
  std::vector<T> data(out.numel());
  const std::size_t plane = first.plane();
  std::vector<ImplPtr<T>> impls;
  for (int n = 0; n < first.n; ++n) {
    std::size_t offset = static_cast<std::size_t>(n) * channels * plane;
    for (const auto& t : inputs) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      auto src = t.data().subspan(static_cast<std::size_t>(n) * len, len);
      std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += len;
    }
  }
  for (const auto& t : inputs) impls.push_back(t.impl_ptr());
  return make_result<T>(out, std::move(data), "concat_channels", inputs,
                        [impls, channels, plane, batch = first.n](std::span<const T> go) {
                          for (int n = 0; n < batch; ++n) {
                            std::size_t offset = static_cast<std::size_t>(n) * channels * plane;
                            for (const auto& t : impls) {
                              const std::size_t len =
                                  static_cast<std::size_t>(t->shape.c) * plane;
                              if (t->requires_grad) {
                                auto& g = t->grad_buffer();
                                for (std::size_t i = 0; i < len; ++i) {
                                  g[n * len + i] += go[offset + i];
                                }
                              }
                              offset += len;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int h, int w) {
  const Shape& s = x.shape();
  if (h < 1 || w < 1 || h > s.h || w > s.w) {
    throw ShapeError("crop: window " + std::to_string(h) + "x" + std::to_string(w) +
                     " does not fit in " + dims(s));
  }
  if (h == s.h && w == s.w) return x;
  Shape out{s.n, s.c, h, w};
  std::vector<T> data(out.numel());
  auto in = x.data();
  const int planes_n = s.n * s.c;
  for (int p = 0; p < planes_n; ++p) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        data[(static_cast<std::size_t>(p) * h + y) * w + xx] =
            in[(static_cast<std::size_t>(p) * s.h + y) * s.w + xx];
      }
    }
  }
  ImplPtr<T> xi = x.impl_ptr();
  return make_result<T>(out, std::move(data), "crop", {x},
                        [xi, s, h, w, planes_n](std::span<const T> go) {
                          auto& g = xi->grad_buffer();
                          for (int p = 0; p < planes_n; ++p) {
                            for (int y = 0; y < h; ++y) {
                              for (int xx = 0; xx < w; ++xx) {
                                g[(static_cast<std::size_t>(p) * s.h + y) * s.w + xx] +=
                                    go[(static_cast<std::size_t>(p) * h + y) * w + xx];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& x) {
  const Shape& s = x.shape();
  std::vector<T> data(s.numel());
  auto in = x.data();
  for (std::size_t row = 0; row < s.numel() / s.w; ++row) {
    for (int c = 0; c < s.w; ++c) data[row * s.w + c] = in[row * s.w + (s.w - 1 - c)];
  }
  return Tensor<T>::from(s, std::move(data));
}

#define POOLNET_INSTANTIATE(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,                             \
                            const std::optional<Tensor<T>>&, int, int);                     \
  template Tensor<T> avg_pool2d(const Tensor<T>&, int);                                     \
  template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, int, int);                       \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                     \
  template Tensor<T> max_pool2d(const Tensor<T>&, int);                                     \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, int);                              \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                           \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                        \
  template Tensor<T> crop(const Tensor<T>&, int, int);                                      \
  template Tensor<T> hflip(const Tensor<T>&);

POOLNET_INSTANTIATE(float)
POOLNET_INSTANTIATE(double)

#undef POOLNET_INSTANTIATE

}  // namespace poolnet
