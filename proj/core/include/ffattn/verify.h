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

#ifndef FFATTN_VERIFY_H_
#define FFATTN_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

#include "ffattn/attention.h"
#include "ffattn/model.h"
#include "ffattn/rng.h"

namespace ffattn {

struct VerifyItem {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyItem> items;
  bool passed() const;
  std::string format() const;
};

struct VerifyOptions {
  std::uint64_t seed = 2024;
  // Random trials per (variant, depth) in the oracle-equivalence sweep.
  int oracle_trials = 10;
  // Random inputs per (variant, depth) in the positivity sweep.
  int positivity_samples = 10000;
};

// Oracle equivalence per variant and depth, finite-difference checks of every
// parameter group, positivity sweeps, orthogonal init, AOGLU materialization,
// penalty gradient and parameter-count closed forms. All in 64-bit.
VerifyReport run_verify(const VerifyOptions& options = {});

// Entries drawn from N(0, stddev^2).
template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double stddev = 1.0);

// Closed-form parameter count of the encoder built with softmax attention.
std::uint64_t base_param_closed_form(const ModelConfig& config);

// Kernel parameter count of one attention layer from the matrix shapes.
std::uint64_t kernel_layer_closed_form(const KernelSpec& spec, int n_heads, bool share_qk);

// Max |linear - quadratic| for one random single-head trial at eps = 0.
double oracle_trial(const KernelSpec& spec, std::size_t length, std::size_t value_dim, Rng& rng);

}  // namespace ffattn

#endif  // FFATTN_VERIFY_H_
