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

#ifndef FFATTN_BENCH_H_
#define FFATTN_BENCH_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ffattn/attention.h"

namespace ffattn {

struct BenchOptions {
  std::vector<std::size_t> lengths{256, 512, 1024, 2048};
  std::vector<AttentionKind> kinds{AttentionKind::kKernelLinear, AttentionKind::kSoftmax};
  int d_model = 64;
  int n_heads = 4;
  KernelSpec kernel;  // head_dim is overwritten with d_model / n_heads
  int warmup = 2;
  int samples = 7;
  // Each sample times enough back-to-back calls to last at least
  // min_sample_ms, never more than max_calls_per_sample.
  double min_sample_ms = 1.0;
  int max_calls_per_sample = 1000;
  std::uint64_t seed = 7;
};

struct BenchRow {
  AttentionKind kind = AttentionKind::kKernelLinear;
  std::size_t length = 0;
  double median_ms = 0.0;
  // Total timed calls.
  int repeats = 0;
};

struct BenchFit {
  AttentionKind kind = AttentionKind::kKernelLinear;
  double exponent = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchFit> fits;
  std::vector<std::string> warnings;
};

// Median wall time of one no-grad forward pass of a single attention layer
// (projections, heads, evaluator, output projection) per length and kind,
// 32-bit. Throws ConfigError unless lengths are strictly increasing with at
// least three values.
BenchResult bench_scaling(const BenchOptions& options);

// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(std::span<const double> x, std::span<const double> y);

// "kind,length,median_ms,repeats" followed by one row per measurement.
std::string bench_csv(const BenchResult& result);

}  // namespace ffattn

#endif  // FFATTN_BENCH_H_
