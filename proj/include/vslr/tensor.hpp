#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vslr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

// One executed primitive. `backward` reads the gradient of the op's output and
// accumulates into the gradients of `inputs` that require them.
template <typename T>
struct Node {
  const char* op = "";
  std::vector<Tensor<T>> inputs;
  std::function<void(std::span<const T> grad_out)> backward;
};

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;
};

// Dense row-major tensor with reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage, the way graph
// inputs are captured by backward rules. Values are fixed once an op has
// produced them; parameters are updated in place only through mutable_data().
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor();
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(int axis) const;
  std::size_t numel() const { return s_->data.size(); }

  std::span<const T> data() const { return s_->data; }
  std::span<T> mutable_data() { return s_->data; }
  T item() const;
  T operator[](std::size_t i) const { return s_->data[i]; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool flag) { s_->requires_grad = flag; }
  bool is_leaf() const { return !s_->node; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Allocates a zero-filled gradient buffer on first use. The handle is
  // const-transparent like a shared_ptr: backward rules write through it.
  std::vector<T>& grad_buffer() const;
  void zero_grad() const;

  // Copy of the values with no graph linkage.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  void backward() const;

  const std::shared_ptr<TensorStorage<T>>& storage() const { return s_; }
  const Node<T>* node() const { return s_->node.get(); }
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

// Builds an op output; attaches `backward` only when an input requires grad
// and gradient recording is enabled.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward);

// Adds `values` into the input's gradient when that input requires one.
template <typename T>
void accumulate_grad(const Tensor<T>& input, std::span<const T> values);

// Storages reachable from `root` through grad-requiring edges, inputs before
// consumers. Each storage appears once.
template <typename T>
std::vector<TensorStorage<T>*> topological_order(const Tensor<T>& root);

// Seeds d(loss)/d(loss) = 1 and propagates to every grad-requiring leaf.
// Leaf gradients accumulate across calls; call zero_grad() between steps.
template <typename T>
void backward(const Tensor<T>& loss);

bool grad_enabled();

// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vslr
