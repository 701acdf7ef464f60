#include "poolnet/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace poolnet {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::size_t g_last_backward_nodes = 0;
}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t last_backward_node_count() { return g_last_backward_nodes; }

namespace {

void validate_shape(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  validate_shape(shape);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->data.assign(shape.numel(), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
  const Shape& s = shape();
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return impl().data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be set on leaf tensors");
  impl().requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape();
  impl->data = this->impl().data;
  return Tensor(std::move(impl));
}

template <typename T>
void Tensor<T>::backward() {
  if (shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward() requires a 1x1x1x1 loss, got " + shape().str());
  }
  if (!requires_grad()) {
    throw std::logic_error("backward() on a tensor without lineage");
  }

  // Iterative post-order DFS gives a topological order (inputs first).
  using Impl = TensorImpl<T>;
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* gn = node->node.get();
    if (gn != nullptr && next < gn->inputs.size()) {
      Impl* child = gn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  g_last_backward_nodes = order.size();

  for (Impl* node : order) {
    if (node->node) node->grad.assign(node->data.size(), T(0));
  }
  impl().grad.assign(1, T(1));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (!node->node) continue;
    node->node->backward(node->grad);
    if (node != impl_.get()) std::vector<T>().swap(node->grad);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string op,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    auto node = std::make_shared<GradNode<T>>();
    node->op = std::move(op);
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl_ptr());
    node->backward = std::move(backward);
    impl->node = std::move(node);
    impl->requires_grad = true;
  }
  return Tensor<T>(std::move(impl));
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(Shape, std::vector<float>, std::string,
                                   std::vector<Tensor<float>>,
                                   std::function<void(std::span<const float>)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::string,
                                    std::vector<Tensor<double>>,
                                    std::function<void(std::span<const double>)>);

}  // namespace poolnet
