#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wastegan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  std::span<T> ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Dense row-major tensor handle. Copies share the underlying node, so a
// tensor passed to an op and later updated in place (optimizer steps on
// leaves) is seen consistently by every holder.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor from(Shape shape, std::vector<T> data);
  static BasicTensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct write access; meant for leaves (initialisation, optimizer steps).
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed each call.
  void backward() const;

  // Same values, no history.
  BasicTensor detach() const;
  BasicTensor clone() const { return detach(); }

  std::string_view op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Process-wide count of backward() invocations (instrumentation only).
std::uint64_t backward_call_count();

// Labels of every node reachable from `root`, in topological order.
template <typename T>
std::vector<std::string> graph_op_labels(const BasicTensor<T>& root);

template <typename T>
BasicTensor<double> to_double(const BasicTensor<T>& t);
template <typename T>
BasicTensor<float> to_float(const BasicTensor<T>& t);

}  // namespace wastegan
