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

#ifndef FFATTN_RNG_H_
#define FFATTN_RNG_H_

#include <array>
#include <cstdint>

namespace ffattn {

// xoshiro256** seeded through splitmix64. Integer draws are bit-exact on
// every platform; real-valued draws depend only on IEEE arithmetic and libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform integer in [0, bound). bound must be positive. Unbiased
  // (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t bound);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Standard normal via the Box-Muller transform.
  double normal();
  bool bernoulli(double p) { return uniform01() < p; }

  // Independent stream for a sub-task, derived from this generator's seed.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::array<std::uint64_t, 4> state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fisher-Yates shuffle driven by Rng.
template <typename Container>
void shuffle(Container& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace ffattn

#endif  // FFATTN_RNG_H_
