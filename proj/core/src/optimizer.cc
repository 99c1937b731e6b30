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

#include "ffattn/optimizer.h"

#include <algorithm>
#include <cmath>

#include "ffattn/errors.h"

namespace ffattn {

double scheduled_lr(const OptimizerConfig& optimizer, const ScheduleConfig& schedule, int step) {
  const double t = std::max(step, 1);
  const double warmup = schedule.warmup_steps;
  if (t <= warmup) return optimizer.lr * t / warmup;
  switch (schedule.decay) {
    case DecayKind::kLinear: {
      const double span = schedule.total_steps - warmup;
      return optimizer.lr * std::max(0.0, (schedule.total_steps - t) / span);
    }
    case DecayKind::kInvSqrt:
      return optimizer.lr * std::sqrt(std::max(warmup, 1.0) / t);
  }
  return optimizer.lr;
}

template <typename T>
Adam<T>::Adam(OptimizerConfig optimizer, ScheduleConfig schedule)
    : optimizer_(optimizer), schedule_(schedule) {}

template <typename T>
std::vector<Tensor<T>> Adam<T>::step(std::span<const Tensor<T>> params,
                                     std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    throw ContractError("Adam::step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].numel(), T(0));
      v_[i].assign(params[i].numel(), T(0));
    }
  } else if (m_.size() != params.size()) {
    throw ContractError("Adam::step: parameter list changed size between steps");
  }

  ++step_;
  const double lr = scheduled_lr(optimizer_, schedule_, step_);
  const double b1 = optimizer_.beta1;
  const double b2 = optimizer_.beta2;
  const double c1 = 1.0 - std::pow(b1, step_);
  const double c2 = 1.0 - std::pow(b2, step_);
  const double wd = optimizer_.weight_decay;

  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = params[i];
    const Tensor<T>& g = grads[i];
    if (p.shape() != g.shape() || m_[i].size() != p.numel()) {
      throw DimensionError("Adam::step: gradient " + shape_string(g.shape()) +
                           " does not match parameter " + shape_string(p.shape()));
    }
    const auto pd = p.data();
    const auto gd = g.data();
    std::vector<T> next(p.numel());
    for (std::size_t j = 0; j < next.size(); ++j) {
      const double gj = gd[j];
      const double m = b1 * m_[i][j] + (1.0 - b1) * gj;
      const double v = b2 * v_[i][j] + (1.0 - b2) * gj * gj;
      m_[i][j] = static_cast<T>(m);
      v_[i][j] = static_cast<T>(v);
      const double update = (m / c1) / (std::sqrt(v / c2) + optimizer_.eps);
      next[j] = static_cast<T>(pd[j] - lr * (update + wd * pd[j]));
    }
    out.push_back(p.with_values(std::move(next)));
  }
  return out;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ffattn
