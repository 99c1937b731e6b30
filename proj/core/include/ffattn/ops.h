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

#ifndef FFATTN_OPS_H_
#define FFATTN_OPS_H_

// Differentiable tensor operations.
//
// Broadcasting: binary elementwise operations accept operands of equal shape,
// or operands where one shape is a suffix of the other (for example a bias of
// shape [n] against a matrix [m x n], or a 0-d scalar against anything). The
// shorter operand is repeated along the leading dimensions of the longer one
// and its gradient is summed over those repetitions. No other broadcasting is
// performed; row-wise scaling has dedicated operations below.
//
// Matrix operations take rank-2 tensors. Every operation is deterministic for
// a fixed build.

#include <cstdint>
#include <span>
#include <vector>

#include "ffattn/rng.h"
#include "ffattn/tensor.h"

namespace ffattn {

// [m x k] * [k x n] -> [m x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// Division by zero is not trapped; it yields non-finite values which the
// training loop detects.
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);
template <typename T>
Tensor<T> square(const Tensor<T>& a);
// Subgradient 0 at 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& a);

// ln(1 + e^x) as max(x, 0) + ln(1 + e^-|x|). Strictly positive wherever the
// result is representable.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a);
// Logistic sigmoid, evaluated without overflow for large |x|.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

// Reductions over all elements; the result is 0-d.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
// [m x n] -> [m x 1].
template <typename T>
Tensor<T> row_sum(const Tensor<T>& a);

// Row-wise exp(x - max) / sum.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

// Mean negative log-likelihood of integer labels under row-wise softmax of
// logits [B x C].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Normalizes every row of x [m x n] to zero mean and unit variance, then
// applies gain and bias (both shape [n]).
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          T eps);

// Multiplies row i of x [m x n] by the constant weights[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> weights);
// Multiplies column j of x [m x n] by the constant weights[j].
template <typename T>
Tensor<T> scale_cols(const Tensor<T>& x, std::span<const T> weights);
// Divides row i of x [m x n] by denom[i]; denom is [m x 1].
template <typename T>
Tensor<T> div_rows(const Tensor<T>& x, const Tensor<T>& denom);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

// Rows of table [V x d] selected by ids; throws DataError on an id >= V.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int32_t> ids);

// Inverted dropout: zeroes each element with probability rate and scales the
// survivors by 1 / (1 - rate). rate == 0 returns the input unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng);

}  // namespace ffattn

#endif  // FFATTN_OPS_H_
