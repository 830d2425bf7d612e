#include "wastegan/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "wastegan/errors.hpp"

namespace wastegan {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_backward_calls{0};
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
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

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }
std::uint64_t backward_call_count() { return g_backward_calls.load(); }

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return BasicTensor(std::move(node));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return BasicTensor(std::move(node));
}

namespace {

template <typename T>
std::vector<TensorNode<T>*> topo_order(TensorNode<T>* root) {
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <typename T>
void BasicTensor<T>::backward() const {
  if (!node_) throw ContractError("backward() on undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  g_backward_calls.fetch_add(1);
  if (!node_->requires_grad) return;
  auto order = topo_order(node_.get());
  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), T(0));
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (!n->is_leaf() && n->backward_fn) n->backward_fn(*n);
  }
  for (auto* n : order) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template <typename T>
std::vector<std::string> graph_op_labels(const BasicTensor<T>& root) {
  std::vector<std::string> labels;
  for (auto* n : topo_order(root.node().get())) labels.emplace_back(n->op);
  return labels;
}

template <typename T>
BasicTensor<double> to_double(const BasicTensor<T>& t) {
  std::vector<double> d(t.data().begin(), t.data().end());
  return BasicTensor<double>::from(t.shape(), std::move(d));
}

template <typename T>
BasicTensor<float> to_float(const BasicTensor<T>& t) {
  std::vector<float> d(t.numel());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(t.data()[i]);
  return BasicTensor<float>::from(t.shape(), std::move(d));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template std::vector<std::string> graph_op_labels(const BasicTensor<float>&);
template std::vector<std::string> graph_op_labels(const BasicTensor<double>&);
template BasicTensor<double> to_double(const BasicTensor<float>&);
template BasicTensor<double> to_double(const BasicTensor<double>&);
template BasicTensor<float> to_float(const BasicTensor<float>&);
template BasicTensor<float> to_float(const BasicTensor<double>&);

}  // namespace wastegan
