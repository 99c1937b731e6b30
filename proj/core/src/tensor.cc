// Copyright 2026 The ffattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ffattn/tensor.h"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "ffattn/errors.h"

namespace ffattn {
namespace {

thread_local bool g_grad_enabled = true;

ParamId next_param_id() {
  static std::atomic<ParamId> counter{0};
  return ++counter;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor() : data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
  if (ffattn::numel(shape_) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero extent");
  }
  data_ = std::make_shared<const std::vector<T>>(std::move(data));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::shared_ptr<const std::vector<T>> data,
                  std::shared_ptr<Node> node)
    : shape_(std::move(shape)), data_(std::move(data)), node_(std::move(node)) {}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = ffattn::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
  std::vector<T> data(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = T(1);
  return Tensor({n, n}, std::move(data));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> data) {
  Tensor t(std::move(shape), std::move(data));
  auto node = std::make_shared<Node>();
  node->numel = t.numel();
  node->shape = t.shape_;
  node->param_id = next_param_id();
  t.node_ = std::move(node);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::with_values(std::vector<T> data) const {
  if (data.size() != numel()) {
    throw DimensionError("with_values: expected " + std::to_string(numel()) + " values, got " +
                         std::to_string(data.size()));
  }
  auto storage = std::make_shared<const std::vector<T>>(std::move(data));
  return Tensor(shape_, std::move(storage), is_parameter() ? node_ : nullptr);
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data,
                             std::initializer_list<const Tensor*> inputs,
                             typename Node::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->numel = out.numel();
  node->inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) node->inputs.push_back(in->node_);
  node->backward = std::move(backward);
  out.node_ = std::move(node);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data, std::span<const Tensor> inputs,
                             typename Node::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->numel = out.numel();
  node->inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) node->inputs.push_back(in.node_);
  node->backward = std::move(backward);
  out.node_ = std::move(node);
  return out;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[1];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  }
  return (*data_)[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  return (*data_)[row * cols() + col];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape_, data_, nullptr);
}

template <typename T>
const Tensor<T>& GradMap<T>::at(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw ContractError("no gradient recorded for parameter " + std::to_string(id));
  }
  return it->second;
}

template <typename T>
void GradMap<T>::insert(ParamId id, Tensor<T> grad) {
  grads_.insert_or_assign(id, std::move(grad));
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Reverse topological order (loss first) of the interior vertices, plus the
// reachable leaves.
template <typename T>
void topo_order(const NodePtr<T>& root, std::vector<detail::Node<T>*>& order,
                std::vector<detail::Node<T>*>& leaves) {
  std::unordered_map<detail::Node<T>*, bool> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited[root.get()] = true;
  std::vector<detail::Node<T>*> post;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child != nullptr && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (node->is_leaf()) {
      leaves.push_back(node);
    } else {
      post.push_back(node);
    }
    stack.pop_back();
  }
  order.assign(post.rbegin(), post.rend());
}

}  // namespace

template <typename T>
GradMap<T> backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  GradMap<T> result;
  const auto& root = loss.node();
  if (!root) return result;
  if (root->is_leaf()) {
    result.insert(root->param_id, Tensor<T>::full(loss.shape(), T(1)));
    return result;
  }

  std::vector<detail::Node<T>*> order;
  std::vector<detail::Node<T>*> leaves;
  topo_order<T>(root, order, leaves);
  for (const auto* node : order) {
    if (node->consumed) {
      throw StateError("backward called on a graph that was already consumed");
    }
  }

  std::unordered_map<const detail::Node<T>*, std::vector<T>> grads;
  grads[root.get()] = std::vector<T>(1, T(1));
  std::vector<std::vector<T>*> sinks;
  for (auto* node : order) {
    auto it = grads.find(node);
    if (it == grads.end()) continue;
    std::vector<T> grad = std::move(it->second);
    grads.erase(it);
    sinks.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const auto& in = node->inputs[i];
      if (!in) continue;
      auto& buf = grads[in.get()];
      if (buf.empty()) buf.assign(in->numel, T(0));
      sinks[i] = &buf;
    }
    node->backward(grad, sinks);
    node->consumed = true;
    node->backward = nullptr;
  }

  for (auto* leaf : leaves) {
    auto it = grads.find(leaf);
    std::vector<T> g =
        it == grads.end() ? std::vector<T>(leaf->numel, T(0)) : std::move(it->second);
    result.insert(leaf->param_id, Tensor<T>(leaf->shape, std::move(g)));
  }
  return result;
}

template <typename T>
GradMap<T> backward(const Tensor<T>& loss, std::span<const Tensor<T>> params) {
  GradMap<T> flat = backward(loss);
  GradMap<T> result;
  for (const Tensor<T>& p : params) {
    if (!p.is_parameter()) {
      throw ContractError("backward: requested gradient of a tensor that is not a parameter");
    }
    if (flat.contains(p.param_id())) {
      result.insert(p.param_id(), flat.at(p.param_id()));
    } else {
      result.insert(p.param_id(), Tensor<T>::zeros(p.shape()));
    }
  }
  return result;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradMap<float>;
template class GradMap<double>;
template GradMap<float> backward(const Tensor<float>&);
template GradMap<double> backward(const Tensor<double>&);
template GradMap<float> backward(const Tensor<float>&, std::span<const Tensor<float>>);
template GradMap<double> backward(const Tensor<double>&, std::span<const Tensor<double>>);

}  // namespace ffattn
