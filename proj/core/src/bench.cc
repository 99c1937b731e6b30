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

#include "ffattn/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ffattn/errors.h"
#include "ffattn/rng.h"

namespace ffattn {
namespace {

using Clock = std::chrono::steady_clock;

double time_calls(const AttentionLayerParams<float>& params, const AttentionConfig& config,
                  const Tensor<float>& x, const PadMask& mask, int calls) {
  const auto start = Clock::now();
  for (int i = 0; i < calls; ++i) {
    const Tensor<float> out = multi_head_attention(x, params, config, mask);
    if (!std::isfinite(out[0])) throw ContractError("bench_scaling: non-finite output");
  }
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

double fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractError("fit_loglog_slope: need at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ContractError("fit_loglog_slope: values must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ContractError("fit_loglog_slope: x values are all equal");
  return sxy / sxx;
}

BenchResult bench_scaling(const BenchOptions& options) {
  if (options.lengths.size() < 3) throw ConfigError("bench: at least three lengths required");
  for (std::size_t i = 1; i < options.lengths.size(); ++i) {
    if (options.lengths[i] <= options.lengths[i - 1]) {
      throw ConfigError("bench: lengths must be strictly increasing");
    }
  }
  if (options.lengths.front() == 0) throw ConfigError("bench: lengths must be positive");
  if (options.samples < 1) throw ConfigError("bench: samples must be at least 1");

  NoGradGuard no_grad;
  BenchResult result;
  for (AttentionKind kind : options.kinds) {
    AttentionConfig config;
    config.kind = kind;
    config.d_model = options.d_model;
    config.n_heads = options.n_heads;
    config.kernel = options.kernel;
    config.kernel.head_dim = config.head_dim();
    config.validate();
    Rng rng(options.seed);
    const auto params = init_attention_params<float>(config, rng);

    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t length : options.lengths) {
      std::vector<float> values(length * static_cast<std::size_t>(options.d_model));
      for (float& v : values) v = static_cast<float>(rng.normal());
      const Tensor<float> x({length, static_cast<std::size_t>(options.d_model)}, std::move(values));
      const PadMask mask = PadMask::all_real(length);

      for (int i = 0; i < options.warmup; ++i) time_calls(params, config, x, mask, 1);

      // Grow the calls per sample until one sample clears the timer floor.
      int calls = 1;
      double probe = time_calls(params, config, x, mask, calls);
      while (probe < options.min_sample_ms && calls < options.max_calls_per_sample) {
        calls = std::min(calls * 2, options.max_calls_per_sample);
        probe = time_calls(params, config, x, mask, calls);
      }
      if (probe < options.min_sample_ms) {
        std::ostringstream w;
        w << to_string(kind) << " L=" << length << ": sample of " << calls << " calls took "
          << probe << " ms, below the " << options.min_sample_ms << " ms floor";
        result.warnings.push_back(w.str());
      }

      std::vector<double> per_call;
      for (int s = 0; s < options.samples; ++s) {
        per_call.push_back(time_calls(params, config, x, mask, calls) / calls);
      }
      std::nth_element(per_call.begin(), per_call.begin() + per_call.size() / 2, per_call.end());
      const double median = per_call[per_call.size() / 2];
      result.rows.push_back({kind, length, median, calls * options.samples});
      xs.push_back(static_cast<double>(length));
      ys.push_back(median);
    }
    result.fits.push_back({kind, fit_loglog_slope(xs, ys)});
  }
  return result;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream os;
  os << "kind,length,median_ms,repeats\n";
  for (const auto& r : result.rows) {
    os << to_string(r.kind) << ',' << r.length << ',' << r.median_ms << ',' << r.repeats << '\n';
  }
  return os.str();
}

}  // namespace ffattn
