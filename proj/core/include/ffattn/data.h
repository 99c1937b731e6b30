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

#ifndef FFATTN_DATA_H_
#define FFATTN_DATA_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffattn/attention.h"

namespace ffattn {

// Token id reserved for padding. Generators never emit it.
inline constexpr std::int32_t kPadId = 0;

enum class TaskKind { kClassify, kMatch };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct Example {
  std::vector<std::int32_t> tokens;
  // Second sequence of a matching pair; empty for classification.
  std::vector<std::int32_t> tokens_b;
  int label = 0;
};

struct Dataset {
  TaskKind kind = TaskKind::kClassify;
  std::vector<Example> examples;
  // symbols[id] is the printable form of token id; symbols[0] is the pad.
  std::vector<std::string> symbols;
  int classes = 2;

  std::size_t vocab_size() const { return symbols.size(); }
  // Throws DataError when an invariant is broken: empty, id out of range,
  // label out of range, id 0 inside a sequence, missing second sequence.
  void validate() const;
};

// B padded sequences of a common length L, row-major.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<bool> mask;

  std::span<const std::int32_t> row(std::size_t i) const {
    return {ids.data() + i * length, length};
  }
  PadMask row_mask(std::size_t i) const;
};

struct Batch {
  TaskKind kind = TaskKind::kClassify;
  SequenceBatch first;
  std::optional<SequenceBatch> second;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Pads (with kPadId) or truncates the given sequences to their longest
// length capped at max_len.
SequenceBatch make_sequence_batch(std::span<const std::vector<std::int32_t>* const> sequences,
                                  std::size_t max_len);

}  // namespace ffattn

#endif  // FFATTN_DATA_H_
