#include "vslr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "vslr/error.hpp"

namespace vslr {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor() : s_(std::make_shared<TensorStorage<T>>()) {
  s_->shape = {};
  s_->data = {T(0)};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : s_(std::make_shared<TensorStorage<T>>()) {
  for (auto e : shape) {
    if (e == 0) fail(errc::kShape, "zero extent in shape " + shape_str(shape));
  }
  if (vslr::numel(shape) != data.size()) {
    fail(errc::kShape, "shape " + shape_str(shape) + " needs " +
                           std::to_string(vslr::numel(shape)) + " values, got " +
                           std::to_string(data.size()));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, std::vector<T>(vslr::numel(shape), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return Tensor(shape, std::vector<T>(vslr::numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    fail(errc::kShape, "axis " + std::to_string(axis) + " out of range for " +
                           shape_str(shape()));
  }
  return s_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) fail(errc::kShape, "item() on " + shape_str(shape()));
  return s_->data[0];
}

template <typename T>
std::vector<T>& Tensor<T>::grad_buffer() const {
  if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(s_->shape, s_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
  vslr::backward(*this);
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward_fn);
  out.storage()->node = std::move(node);
  out.storage()->requires_grad = true;
  return out;
}

template <typename T>
void accumulate_grad(const Tensor<T>& input, std::span<const T> values) {
  if (!input.requires_grad()) return;
  auto& g = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

template <typename T>
std::vector<TensorStorage<T>*> topological_order(const Tensor<T>& root) {
  std::vector<TensorStorage<T>*> order;
  if (!root.requires_grad()) return order;
  std::unordered_set<TensorStorage<T>*> seen;
  // Iterative post-order DFS; (storage, next input index).
  std::vector<std::pair<TensorStorage<T>*, std::size_t>> stack;
  stack.emplace_back(root.storage().get(), 0);
  seen.insert(root.storage().get());
  while (!stack.empty()) {
    auto& [s, next] = stack.back();
    if (s->node && next < s->node->inputs.size()) {
      auto* child = s->node->inputs[next++].storage().get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(s);
    stack.pop_back();
  }
  return order;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    fail(errc::kShape, "backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss);
  for (auto* s : order) {
    if (s->node) {
      s->grad.assign(s->data.size(), T(0));
    } else if (s->grad.size() != s->data.size()) {
      s->grad.assign(s->data.size(), T(0));
    }
  }
  auto* root = loss.storage().get();
  if (root->node) {
    root->grad[0] = T(1);
  } else {
    root->grad[0] += T(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* s = *it;
    if (s->node && s->node->backward) s->node->backward(std::span<const T>(s->grad));
  }
}

#define VSLR_INSTANTIATE(T)                                                          \
  template class Tensor<T>;                                                          \
  template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>,             \
                                    std::vector<Tensor<T>>,                          \
                                    std::function<void(std::span<const T>)>);        \
  template void accumulate_grad<T>(const Tensor<T>&, std::span<const T>);                  \
  template std::vector<TensorStorage<T>*> topological_order<T>(const Tensor<T>&);    \
  template void backward<T>(const Tensor<T>&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
