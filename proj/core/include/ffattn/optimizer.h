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

#ifndef FFATTN_OPTIMIZER_H_
#define FFATTN_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ffattn/config.h"
#include "ffattn/tensor.h"

namespace ffattn {

// Learning rate at 1-based step t: linear warmup to the base rate over
// warmup_steps, then linear decay to zero at total_steps or inverse
// square-root decay.
double scheduled_lr(const OptimizerConfig& optimizer, const ScheduleConfig& schedule, int step);

// Adam with bias correction and decoupled weight decay. Moments are kept per
// parameter position, so the parameter list must keep its order and shapes.
template <typename T>
class Adam {
 public:
  Adam(OptimizerConfig optimizer, ScheduleConfig schedule);

  // Returns the updated parameters. grads[i] matches params[i] in shape.
  std::vector<Tensor<T>> step(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads);

  int steps_taken() const { return step_; }
  double current_lr() const { return scheduled_lr(optimizer_, schedule_, step_); }

 private:
  OptimizerConfig optimizer_;
  ScheduleConfig schedule_;
  int step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ffattn

#endif  // FFATTN_OPTIMIZER_H_
