#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace poolnet {

/// Rank-4 tensor extents in NCHW order.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Raised on any shape or argument contract violation inside the engine.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives the gradient of the node's output and accumulates into inputs.
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;

  // Grad buffer of this tensor, zero-allocated on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Whether newly created ops record lineage on the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense NCHW tensor with shared storage and reverse-mode lineage.
///
/// Copies are shallow: two Tensor handles may refer to one buffer. Use
/// clone() for a detached deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t numel() const { return impl().data.size(); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }
  T& at(int n, int c, int h, int w);
  T at(int n, int c, int h, int w) const;
  /// Value of a 1x1x1x1 tensor.
  T item() const;

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<const T> grad() const { return impl().grad; }
  std::span<T> grad_mut() { return impl().grad_buffer(); }
  void zero_grad() { impl().grad.clear(); }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl().node == nullptr; }
  const GradNode<T>* grad_node() const { return impl().node.get(); }

  /// Backpropagates from this 1x1x1x1 tensor. Leaf gradients accumulate
  /// across calls; intermediate gradients are recomputed each call.
  void backward();

  /// Deep copy of the data with no grad and no lineage.
  Tensor clone() const;
  Tensor detach() const { return clone(); }

  TensorImpl<T>& impl() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  const TensorImpl<T>& impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Builds an op result. Lineage is attached only when grad mode is on and
/// at least one input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string op,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward);

/// Number of nodes visited by the last backward() on this thread; used to
/// check that the topological walk touches each node once.
std::size_t last_backward_node_count();

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace poolnet
