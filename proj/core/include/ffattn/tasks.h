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

#ifndef FFATTN_TASKS_H_
#define FFATTN_TASKS_H_

// Deterministic synthetic stand-ins for long-sequence benchmark tasks, TSV
// ingestion of externally prepared token data, and batching.
//
// All generators are pure functions of their arguments: they draw only
// integers from Rng, so datasets are byte-identical across platforms.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffattn/data.h"

namespace ffattn {

// ---------------------------------------------------------------------------
// ListOps
//
// Vocabulary: 0 pad, 1..10 the digits 0..9, then "[MAX", "[MIN", "[MED",
// "[SM" and "]". An expression is "[OP a1 ... ak]" with 1 <= k <= 5 and every
// argument a digit or a nested expression. Operators at max_depth take only
// digits and as many as their share of the length allows. MED of an even number of values is
// floor of the mean of the two middle values; SM is the sum modulo 10.
//
// A target length is drawn uniformly from [3, max_len] and split randomly
// among the arguments. The mean expression length comes out close to
// max_len / 2 (about 0.48 max_len for max_len 128, max_depth 4).

inline constexpr std::int32_t kListOpsDigitBase = 1;
inline constexpr std::int32_t kListOpsMax = 11;
inline constexpr std::int32_t kListOpsMin = 12;
inline constexpr std::int32_t kListOpsMed = 13;
inline constexpr std::int32_t kListOpsSumMod = 14;
inline constexpr std::int32_t kListOpsClose = 15;
inline constexpr int kListOpsVocabSize = 16;
inline constexpr int kListOpsMaxArgs = 5;

// Throws ConfigError when max_depth < 1, max_len < 8 or count == 0.
Dataset gen_listops(std::uint64_t seed, std::size_t count, std::size_t max_len, int max_depth);

// Recursive-descent evaluators. Throw DataError on malformed input.
int evaluate_listops(std::span<const std::int32_t> tokens);
int evaluate_listops(std::string_view expression);
std::vector<std::int32_t> tokenize_listops(std::string_view expression);
std::string listops_to_string(std::span<const std::int32_t> tokens);

// ---------------------------------------------------------------------------
// Text classification
//
// Class c plants the motif [1 + 4c, 2 + 4c, 3 + 4c, 4 + 4c] at a random offset
// in a sequence whose other positions are uniform noise over the ids that no
// motif uses. Sequence lengths are uniform in [max(5, len / 2), len]; labels
// are balanced (counts differ by at most one).

inline constexpr int kTextMotifLength = 4;

std::vector<std::int32_t> text_motif(int label);

// Throws ConfigError when classes < 2, len < kTextMotifLength + 1, count == 0,
// or vocab_size < 1 + classes * kTextMotifLength + 2.
Dataset gen_text_classification(std::uint64_t seed, std::size_t count, std::size_t len,
                                int vocab_size, int classes);

// ---------------------------------------------------------------------------
// Matching
//
// Four motifs of three ids each (ids 1..12). Each sequence of a pair carries
// one planted motif; positive pairs (label 1) share it, negative pairs carry
// two different motifs. Noise uses ids >= 13.

inline constexpr int kMatchMotifCount = 4;
inline constexpr int kMatchMotifLength = 3;

std::vector<std::int32_t> match_motif(int index);

// Throws ConfigError when len < kMatchMotifLength + 1, count == 0 or
// vocab_size < 1 + kMatchMotifCount * kMatchMotifLength + 2.
Dataset gen_matching(std::uint64_t seed, std::size_t count, std::size_t len, int vocab_size);

// ---------------------------------------------------------------------------
// TSV
//
// One example per line: "label<TAB>ids" for classification or
// "label<TAB>ids_a<TAB>ids_b" for matching, ids space separated positive
// integers. Empty lines are skipped. The vocabulary is max id + 1 and the
// class count max label + 1 (at least 2).

Dataset load_tsv_dataset(const std::filesystem::path& path, TaskKind schema);
void save_tsv_dataset(const std::filesystem::path& path, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Batching

// Gathers the given examples into one padded batch (sequences truncated to
// max_len).
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                 std::size_t max_len);

// Splits the dataset into consecutive batches of batch_size (the last one may
// be smaller), after a Fisher-Yates shuffle when shuffle_seed is set.
std::vector<Batch> batch_iter(const Dataset& dataset, std::size_t batch_size, std::size_t max_len,
                              std::optional<std::uint64_t> shuffle_seed);

}  // namespace ffattn

#endif  // FFATTN_TASKS_H_
