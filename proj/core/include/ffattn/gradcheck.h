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

#ifndef FFATTN_GRADCHECK_H_
#define FFATTN_GRADCHECK_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ffattn/tensor.h"

namespace ffattn {

struct ParamGradCheck {
  std::string name;
  // max over elements of |g - g_fd| / max(|g|, |g_fd|, 1e-8).
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  // False when the loss or a perturbed loss was not finite.
  bool finite = true;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;

  double max_rel_error() const;
  bool passed(double tolerance) const;
};

template <typename T>
using LossFn = std::function<Tensor<T>(std::span<const Tensor<T>>)>;

// Compares reverse-mode gradients of loss_fn against central differences
// (f(p + h) - f(p - h)) / 2h, one element at a time. loss_fn must be
// deterministic and return a scalar. step must be positive and gradient
// recording enabled (StateError otherwise); names, when given, label the
// parameters in the report.
template <typename T>
GradCheckReport finite_difference_check(const LossFn<T>& loss_fn,
                                        std::span<const Tensor<T>> params, T step,
                                        std::span<const std::string> names = {});

}  // namespace ffattn

#endif  // FFATTN_GRADCHECK_H_
