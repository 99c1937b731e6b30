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
// Forward cost of one attention layer as sequence length grows.

#include <benchmark/benchmark.h>

#include "ffattn/attention.h"
#include "ffattn/rng.h"

namespace {

using ffattn::AttentionKind;

template <AttentionKind Kind, ffattn::KernelVariant Variant = ffattn::KernelVariant::kLinearSoftplus>
void BM_Attention(benchmark::State& state) {
  ffattn::AttentionConfig config;
  config.kind = Kind;
  config.d_model = 64;
  config.n_heads = 4;
  config.kernel.variant = Variant;
  config.kernel.head_dim = config.head_dim();
  config.validate();
  ffattn::Rng rng(7);
  const auto params = ffattn::init_attention_params<float>(config, rng);
  const auto length = static_cast<std::size_t>(state.range(0));
  std::vector<float> values(length * 64);
  for (float& v : values) v = static_cast<float>(rng.normal());
  const ffattn::Tensor<float> x({length, 64}, std::move(values));
  const auto mask = ffattn::PadMask::all_real(length);
  ffattn::NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ffattn::multi_head_attention(x, params, config, mask));
  }
  state.SetComplexityN(state.range(0));
}

BENCHMARK(BM_Attention<AttentionKind::kKernelLinear>)
    ->RangeMultiplier(2)->Range(256, 4096)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_Attention<AttentionKind::kKernelLinear, ffattn::KernelVariant::kAoglu>)
    ->RangeMultiplier(2)->Range(256, 4096)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_Attention<AttentionKind::kSoftmax>)
    ->RangeMultiplier(2)->Range(256, 2048)->Unit(benchmark::kMillisecond)->Complexity();

}  // namespace

BENCHMARK_MAIN();
