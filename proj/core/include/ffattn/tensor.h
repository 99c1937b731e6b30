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

#ifndef FFATTN_TENSOR_H_
#define FFATTN_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ffattn {

using Shape = std::vector<std::size_t>;

// Identity of a trainable leaf. Zero means "not a parameter".
using ParamId = std::uint64_t;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

// One vertex of the differentiation graph. Leaves carry a ParamId; interior
// vertices carry a backward closure that adds the vector-Jacobian product of
// the incoming gradient into the gradient buffers of their inputs.
template <typename T>
struct Node {
  // sinks[i] is null when input i does not take part in differentiation.
  using BackwardFn =
      std::function<void(std::span<const T> grad, std::span<std::vector<T>* const> sinks)>;

  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  std::size_t numel = 0;
  // Leaves only.
  Shape shape;
  ParamId param_id = 0;
  bool consumed = false;

  bool is_leaf() const { return param_id != 0; }
};

}  // namespace detail

// Dense row-major tensor. Values are immutable once constructed and shared
// between copies; a tensor that takes part in differentiation also holds a
// reference to its graph node.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor element type must be floating point");

 public:
  using value_type = T;
  using Node = detail::Node<T>;

  // 0-d scalar zero.
  Tensor();
  // Constant tensor; throws DimensionError when the data length does not
  // match the shape.
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  static Tensor identity(std::size_t n);

  // Creates a differentiable leaf with a fresh ParamId.
  static Tensor parameter(Shape shape, std::vector<T> data);

  // Same identity (ParamId) and shape, new values. Used by optimizers and
  // finite differences; a constant stays a constant.
  Tensor with_values(std::vector<T> data) const;

  // Builds the result of an operation. A graph node is attached only when
  // gradient recording is enabled and at least one input requires a gradient.
  static Tensor from_op(Shape shape, std::vector<T> data,
                        std::initializer_list<const Tensor*> inputs,
                        typename Node::BackwardFn backward);
  static Tensor from_op(Shape shape, std::vector<T> data, std::span<const Tensor> inputs,
                        typename Node::BackwardFn backward);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_->size(); }
  std::size_t dim(std::size_t axis) const;
  // Rows and columns of a matrix (rank 2) tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  const std::shared_ptr<const std::vector<T>>& storage() const { return data_; }
  std::vector<T> to_vector() const { return *data_; }

  // Value of a single-element tensor.
  T item() const;
  T operator[](std::size_t flat) const { return (*data_)[flat]; }
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_ != nullptr; }
  bool is_parameter() const { return node_ != nullptr && node_->is_leaf(); }
  ParamId param_id() const { return node_ ? node_->param_id : 0; }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Same values without the graph reference.
  Tensor detach() const;

 private:
  Tensor(Shape shape, std::shared_ptr<const std::vector<T>> data, std::shared_ptr<Node> node);

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  std::shared_ptr<Node> node_;
};

// Disables graph construction on the current thread for its lifetime.
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

// Gradients keyed by parameter identity. Each entry has the shape of its
// parameter.
template <typename T>
class GradMap {
 public:
  const Tensor<T>& at(ParamId id) const;
  const Tensor<T>& at(const Tensor<T>& param) const { return at(param.param_id()); }
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  std::size_t size() const { return grads_.size(); }
  void insert(ParamId id, Tensor<T> grad);

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<ParamId, Tensor<T>> grads_;
};

// Reverse-mode pass from a scalar loss. Returns a gradient for every
// parameter leaf reachable from the loss. The interior of the graph is
// consumed: a second call on the same loss (or on any loss sharing consumed
// vertices) throws StateError. A non-scalar loss throws ContractError.
template <typename T>
GradMap<T> backward(const Tensor<T>& loss);

// As above, but guarantees exactly one entry per requested parameter;
// parameters that do not influence the loss receive zeros.
template <typename T>
GradMap<T> backward(const Tensor<T>& loss, std::span<const Tensor<T>> params);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradMap<float>;
extern template class GradMap<double>;

}  // namespace ffattn

#endif  // FFATTN_TENSOR_H_
