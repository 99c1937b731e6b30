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

#include "ffattn/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "ffattn/errors.h"

namespace ffattn {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& p : params) {
    if (!p.finite) return INFINITY;
    worst = std::max(worst, p.max_rel_error);
  }
  return worst;
}

bool GradCheckReport::passed(double tolerance) const {
  return std::all_of(params.begin(), params.end(), [tolerance](const ParamGradCheck& p) {
    return p.finite && p.max_rel_error <= tolerance;
  });
}

template <typename T>
GradCheckReport finite_difference_check(const LossFn<T>& loss_fn,
                                        std::span<const Tensor<T>> params, T step,
                                        std::span<const std::string> names) {
  if (!(step > T(0))) throw ContractError("finite_difference_check: step must be positive");
  if (!grad_enabled()) throw StateError("finite_difference_check: gradient recording is disabled");
  if (!names.empty() && names.size() != params.size()) {
    throw ContractError("finite_difference_check: names and params differ in length");
  }

  GradCheckReport report;
  report.params.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    report.params[k].name = names.empty() ? "param" + std::to_string(k) : names[k];
  }

  const Tensor<T> loss = loss_fn(params);
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    for (auto& p : report.params) p.finite = false;
    return report;
  }
  const GradMap<T> grads = backward(loss, params);

  NoGradGuard no_grad;
  std::vector<Tensor<T>> probe(params.begin(), params.end());
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& entry = report.params[k];
    const auto analytic = grads.at(params[k]).data();
    std::vector<T> values = params[k].to_vector();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = original + step;
      probe[k] = params[k].with_values(values);
      const double plus = static_cast<double>(loss_fn(probe).item());
      values[i] = original - step;
      probe[k] = params[k].with_values(values);
      const double minus = static_cast<double>(loss_fn(probe).item());
      values[i] = original;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        entry.finite = false;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * static_cast<double>(step));
      const double exact = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    probe[k] = params[k];
  }
  return report;
}

template GradCheckReport finite_difference_check(const LossFn<float>&,
                                                 std::span<const Tensor<float>>, float,
                                                 std::span<const std::string>);
template GradCheckReport finite_difference_check(const LossFn<double>&,
                                                 std::span<const Tensor<double>>, double,
                                                 std::span<const std::string>);

}  // namespace ffattn
