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

#include "ffattn/data.h"

#include <algorithm>
#include <string>

#include "ffattn/errors.h"

namespace ffattn {

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kClassify ? "classify" : "match";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "classify") return TaskKind::kClassify;
  if (name == "match") return TaskKind::kMatch;
  throw ConfigError("unknown task schema '" + std::string(name) + "' (expected classify or match)");
}

namespace {

void check_sequence(const std::vector<std::int32_t>& tokens, std::size_t vocab, std::size_t index,
                    const char* which) {
  if (tokens.empty()) {
    throw DataError("example " + std::to_string(index) + ": empty " + which + " sequence");
  }
  for (std::int32_t id : tokens) {
    if (id <= kPadId || static_cast<std::size_t>(id) >= vocab) {
      throw DataError("example " + std::to_string(index) + ": token id " + std::to_string(id) +
                      " outside [1, " + std::to_string(vocab) + ")");
    }
  }
}

}  // namespace

void Dataset::validate() const {
  if (examples.empty()) throw DataError("dataset is empty");
  if (classes < 2) throw DataError("dataset needs at least 2 classes");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    if (ex.label < 0 || ex.label >= classes) {
      throw DataError("example " + std::to_string(i) + ": label " + std::to_string(ex.label) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    check_sequence(ex.tokens, vocab_size(), i, "first");
    if (kind == TaskKind::kMatch) {
      check_sequence(ex.tokens_b, vocab_size(), i, "second");
    } else if (!ex.tokens_b.empty()) {
      throw DataError("example " + std::to_string(i) + ": classification example has a second sequence");
    }
  }
}

PadMask SequenceBatch::row_mask(std::size_t i) const {
  std::vector<bool> real(mask.begin() + static_cast<std::ptrdiff_t>(i * length),
                         mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * length));
  return PadMask(std::move(real));
}

SequenceBatch make_sequence_batch(std::span<const std::vector<std::int32_t>* const> sequences,
                                  std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  SequenceBatch out;
  out.batch = sequences.size();
  for (const auto* seq : sequences) out.length = std::max(out.length, std::min(seq->size(), max_len));
  out.ids.assign(out.batch * out.length, kPadId);
  out.mask.assign(out.batch * out.length, false);
  for (std::size_t i = 0; i < out.batch; ++i) {
    const auto& seq = *sequences[i];
    const std::size_t n = std::min(seq.size(), max_len);
    for (std::size_t j = 0; j < n; ++j) {
      out.ids[i * out.length + j] = seq[j];
      out.mask[i * out.length + j] = true;
    }
  }
  return out;
}

}  // namespace ffattn
