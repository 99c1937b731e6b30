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

#include "ffattn/tasks.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ffattn/errors.h"
#include "ffattn/rng.h"

namespace ffattn {
namespace {

bool is_listops_op(std::int32_t id) { return id >= kListOpsMax && id <= kListOpsSumMod; }

int apply_listops(std::int32_t op, std::vector<int> values) {
  switch (op) {
    case kListOpsMax:
      return *std::max_element(values.begin(), values.end());
    case kListOpsMin:
      return *std::min_element(values.begin(), values.end());
    case kListOpsMed: {
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
    }
    case kListOpsSumMod:
      return std::accumulate(values.begin(), values.end(), 0) % 10;
    default:
      throw DataError("not a ListOps operator id: " + std::to_string(op));
  }
}

std::vector<std::string> listops_symbols() {
  std::vector<std::string> symbols{"<pad>"};
  for (int d = 0; d < 10; ++d) symbols.push_back(std::to_string(d));
  symbols.insert(symbols.end(), {"[MAX", "[MIN", "[MED", "[SM", "]"});
  return symbols;
}

// Appends one expression of at most `budget` tokens (budget >= 3) and returns
// its value.
int generate_listops_node(Rng& rng, int depth, int max_depth, std::size_t budget,
                          std::vector<std::int32_t>& out) {
  const auto op = static_cast<std::int32_t>(kListOpsMax + rng.uniform_index(4));
  out.push_back(op);
  const std::size_t inner = budget - 2;
  // Deepest nodes fill their whole budget with digits, so the mean length
  // tracks the mean budget (about max_len / 2).
  const auto args = depth == max_depth
                        ? inner
                        : static_cast<std::size_t>(rng.uniform_int(
                              1, static_cast<std::int64_t>(std::min<std::size_t>(kListOpsMaxArgs, inner))));
  std::vector<std::size_t> parts(args, 1);
  for (std::size_t extra = inner - args; extra > 0; --extra) parts[rng.uniform_index(args)] += 1;
  std::vector<int> values;
  values.reserve(args);
  for (std::size_t part : parts) {
    if (part >= 3 && depth < max_depth) {
      values.push_back(generate_listops_node(rng, depth + 1, max_depth, part, out));
    } else {
      const int digit = static_cast<int>(rng.uniform_index(10));
      out.push_back(kListOpsDigitBase + digit);
      values.push_back(digit);
    }
  }
  out.push_back(kListOpsClose);
  return apply_listops(op, std::move(values));
}

struct ListOpsParser {
  std::span<const std::int32_t> tokens;
  std::size_t pos = 0;

  int parse_expression() {
    if (pos >= tokens.size() || !is_listops_op(tokens[pos])) {
      throw DataError("ListOps: expected an operator at position " + std::to_string(pos));
    }
    const std::int32_t op = tokens[pos++];
    std::vector<int> values;
    while (pos < tokens.size() && tokens[pos] != kListOpsClose) {
      const std::int32_t id = tokens[pos];
      if (id >= kListOpsDigitBase && id < kListOpsDigitBase + 10) {
        values.push_back(id - kListOpsDigitBase);
        ++pos;
      } else {
        values.push_back(parse_expression());
      }
    }
    if (pos >= tokens.size()) throw DataError("ListOps: missing ']'");
    ++pos;
    if (values.empty()) throw DataError("ListOps: operator without arguments");
    return apply_listops(op, std::move(values));
  }
};

}  // namespace

Dataset gen_listops(std::uint64_t seed, std::size_t count, std::size_t max_len, int max_depth) {
  if (max_depth < 1) throw ConfigError("listops.max_depth: must be at least 1");
  if (max_len < 8) throw ConfigError("listops.max_len: must be at least 8");
  if (count == 0) throw ConfigError("listops.count: must be positive");
  Rng rng(seed);
  Dataset ds;
  ds.kind = TaskKind::kClassify;
  ds.symbols = listops_symbols();
  ds.classes = 10;
  ds.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto budget = static_cast<std::size_t>(rng.uniform_int(3, static_cast<std::int64_t>(max_len)));
    Example ex;
    ex.label = generate_listops_node(rng, 1, max_depth, budget, ex.tokens);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

int evaluate_listops(std::span<const std::int32_t> tokens) {
  ListOpsParser parser{tokens};
  const int value = parser.parse_expression();
  if (parser.pos != tokens.size()) throw DataError("ListOps: trailing tokens after expression");
  return value;
}

int evaluate_listops(std::string_view expression) {
  return evaluate_listops(tokenize_listops(expression));
}

std::vector<std::int32_t> tokenize_listops(std::string_view expression) {
  std::vector<std::int32_t> out;
  std::size_t i = 0;
  while (i < expression.size()) {
    const char c = expression[i];
    if (c == ' ' || c == '\t' || c == '\n') {
      ++i;
    } else if (c == ']') {
      out.push_back(kListOpsClose);
      ++i;
    } else if (c >= '0' && c <= '9') {
      out.push_back(kListOpsDigitBase + (c - '0'));
      ++i;
    } else if (c == '[') {
      std::size_t j = i + 1;
      while (j < expression.size() && expression[j] >= 'A' && expression[j] <= 'Z') ++j;
      const std::string_view name = expression.substr(i + 1, j - i - 1);
      if (name == "MAX") {
        out.push_back(kListOpsMax);
      } else if (name == "MIN") {
        out.push_back(kListOpsMin);
      } else if (name == "MED") {
        out.push_back(kListOpsMed);
      } else if (name == "SM") {
        out.push_back(kListOpsSumMod);
      } else {
        throw DataError("ListOps: unknown operator '[" + std::string(name) + "'");
      }
      i = j;
    } else {
      throw DataError(std::string("ListOps: unexpected character '") + c + "'");
    }
  }
  return out;
}

std::string listops_to_string(std::span<const std::int32_t> tokens) {
  static const std::vector<std::string> symbols = listops_symbols();
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::int32_t id = tokens[i];
    if (id <= kPadId || id >= kListOpsVocabSize) {
      throw DataError("ListOps: token id " + std::to_string(id) + " outside the vocabulary");
    }
    if (i > 0 && id != kListOpsClose) out += ' ';
    out += symbols[static_cast<std::size_t>(id)];
  }
  return out;
}

namespace {

std::vector<std::string> numbered_symbols(int vocab_size) {
  std::vector<std::string> symbols{"<pad>"};
  for (int id = 1; id < vocab_size; ++id) symbols.push_back("t" + std::to_string(id));
  return symbols;
}

// Sequence of `length` noise ids from [noise_lo, vocab) with `motif` written
// at a random offset.
std::vector<std::int32_t> planted_sequence(Rng& rng, std::size_t length,
                                           const std::vector<std::int32_t>& motif,
                                           std::int32_t noise_lo, int vocab_size) {
  std::vector<std::int32_t> seq(length);
  const auto noise_count = static_cast<std::uint64_t>(vocab_size - noise_lo);
  for (auto& id : seq) id = noise_lo + static_cast<std::int32_t>(rng.uniform_index(noise_count));
  const std::size_t offset = rng.uniform_index(length - motif.size() + 1);
  std::copy(motif.begin(), motif.end(), seq.begin() + static_cast<std::ptrdiff_t>(offset));
  return seq;
}

std::size_t draw_length(Rng& rng, std::size_t len, std::size_t min_len) {
  const std::size_t lo = std::max(min_len, len / 2);
  return static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(len)));
}

// Balanced labels 0..classes-1 in random order.
std::vector<int> balanced_labels(Rng& rng, std::size_t count, int classes) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  shuffle(labels, rng);
  return labels;
}

}  // namespace

std::vector<std::int32_t> text_motif(int label) {
  std::vector<std::int32_t> motif(kTextMotifLength);
  for (int i = 0; i < kTextMotifLength; ++i) motif[static_cast<std::size_t>(i)] = 1 + label * kTextMotifLength + i;
  return motif;
}

Dataset gen_text_classification(std::uint64_t seed, std::size_t count, std::size_t len,
                                int vocab_size, int classes) {
  if (classes < 2) throw ConfigError("text.classes: must be at least 2");
  if (count == 0) throw ConfigError("text.count: must be positive");
  if (len < static_cast<std::size_t>(kTextMotifLength) + 1) {
    throw ConfigError("text.len: must be at least " + std::to_string(kTextMotifLength + 1));
  }
  const int noise_lo = 1 + classes * kTextMotifLength;
  if (vocab_size < noise_lo + 2) {
    throw ConfigError("text.vocab_size: " + std::to_string(vocab_size) + " too small for " +
                      std::to_string(classes) + " disjoint motifs (need at least " +
                      std::to_string(noise_lo + 2) + ")");
  }
  Rng rng(seed);
  Dataset ds;
  ds.kind = TaskKind::kClassify;
  ds.symbols = numbered_symbols(vocab_size);
  ds.classes = classes;
  const std::vector<int> labels = balanced_labels(rng, count, classes);
  ds.examples.reserve(count);
  for (int label : labels) {
    Example ex;
    ex.label = label;
    const std::size_t n = draw_length(rng, len, kTextMotifLength + 1);
    ex.tokens = planted_sequence(rng, n, text_motif(label), noise_lo, vocab_size);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::vector<std::int32_t> match_motif(int index) {
  std::vector<std::int32_t> motif(kMatchMotifLength);
  for (int i = 0; i < kMatchMotifLength; ++i) motif[static_cast<std::size_t>(i)] = 1 + index * kMatchMotifLength + i;
  return motif;
}

Dataset gen_matching(std::uint64_t seed, std::size_t count, std::size_t len, int vocab_size) {
  if (count == 0) throw ConfigError("match.count: must be positive");
  if (len < static_cast<std::size_t>(kMatchMotifLength) + 1) {
    throw ConfigError("match.len: must be at least " + std::to_string(kMatchMotifLength + 1));
  }
  const int noise_lo = 1 + kMatchMotifCount * kMatchMotifLength;
  if (vocab_size < noise_lo + 2) {
    throw ConfigError("match.vocab_size: " + std::to_string(vocab_size) +
                      " too small for the matching motifs (need at least " +
                      std::to_string(noise_lo + 2) + ")");
  }
  Rng rng(seed);
  Dataset ds;
  ds.kind = TaskKind::kMatch;
  ds.symbols = numbered_symbols(vocab_size);
  ds.classes = 2;
  const std::vector<int> labels = balanced_labels(rng, count, 2);
  ds.examples.reserve(count);
  for (int label : labels) {
    const int first = static_cast<int>(rng.uniform_index(kMatchMotifCount));
    int second = first;
    if (label == 0) {
      second = static_cast<int>(rng.uniform_index(kMatchMotifCount - 1));
      if (second >= first) ++second;
    }
    Example ex;
    ex.label = label;
    ex.tokens = planted_sequence(rng, draw_length(rng, len, kMatchMotifLength + 1),
                                 match_motif(first), noise_lo, vocab_size);
    ex.tokens_b = planted_sequence(rng, draw_length(rng, len, kMatchMotifLength + 1),
                                   match_motif(second), noise_lo, vocab_size);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    out.push_back(text.substr(start, end == std::string_view::npos ? end : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename Int>
bool parse_int(std::string_view text, Int& value) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::int32_t> parse_ids(std::string_view field, std::size_t line_no,
                                    const std::string& where) {
  std::vector<std::int32_t> ids;
  for (std::string_view piece : split(field, ' ')) {
    if (piece.empty()) continue;
    std::int32_t id = 0;
    if (!parse_int(piece, id)) {
      throw DataError(where + ":" + std::to_string(line_no) + ": token '" + std::string(piece) +
                      "' is not an integer");
    }
    if (id <= kPadId) {
      throw DataError(where + ":" + std::to_string(line_no) + ": token id " + std::to_string(id) +
                      " must be positive (0 is the padding id)");
    }
    ids.push_back(id);
  }
  if (ids.empty()) {
    throw DataError(where + ":" + std::to_string(line_no) + ": empty token sequence");
  }
  return ids;
}

}  // namespace

Dataset load_tsv_dataset(const std::filesystem::path& path, TaskKind schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  const std::string where = path.string();
  Dataset ds;
  ds.kind = schema;
  const std::size_t want_fields = schema == TaskKind::kMatch ? 3 : 2;
  std::int32_t max_id = 0;
  int max_label = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != want_fields) {
      throw DataError(where + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(want_fields) + " tab-separated fields, found " +
                      std::to_string(fields.size()));
    }
    Example ex;
    if (!parse_int(fields[0], ex.label) || ex.label < 0) {
      throw DataError(where + ":" + std::to_string(line_no) + ": label '" +
                      std::string(fields[0]) + "' is not a non-negative integer");
    }
    ex.tokens = parse_ids(fields[1], line_no, where);
    if (schema == TaskKind::kMatch) ex.tokens_b = parse_ids(fields[2], line_no, where);
    for (auto id : ex.tokens) max_id = std::max(max_id, id);
    for (auto id : ex.tokens_b) max_id = std::max(max_id, id);
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw DataError("dataset file " + where + " has no examples");
  ds.symbols.reserve(static_cast<std::size_t>(max_id) + 1);
  ds.symbols.push_back("<pad>");
  for (std::int32_t id = 1; id <= max_id; ++id) ds.symbols.push_back(std::to_string(id));
  ds.classes = std::max(2, max_label + 1);
  if (schema == TaskKind::kMatch && ds.classes != 2) {
    throw DataError(where + ": matching labels must be 0 or 1");
  }
  return ds;
}

void save_tsv_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  auto write_ids = [&out](const std::vector<std::int32_t>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ' ';
      out << ids[i];
    }
  };
  for (const Example& ex : dataset.examples) {
    out << ex.label << '\t';
    write_ids(ex.tokens);
    if (dataset.kind == TaskKind::kMatch) {
      out << '\t';
      write_ids(ex.tokens_b);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing dataset file " + path.string());
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                 std::size_t max_len) {
  if (indices.empty()) throw ContractError("make_batch: no examples selected");
  Batch batch;
  batch.kind = dataset.kind;
  std::vector<const std::vector<std::int32_t>*> first;
  std::vector<const std::vector<std::int32_t>*> second;
  for (std::size_t idx : indices) {
    const Example& ex = dataset.examples.at(idx);
    first.push_back(&ex.tokens);
    if (dataset.kind == TaskKind::kMatch) second.push_back(&ex.tokens_b);
    batch.labels.push_back(ex.label);
  }
  batch.first = make_sequence_batch(first, max_len);
  if (dataset.kind == TaskKind::kMatch) batch.second = make_sequence_batch(second, max_len);
  return batch;
}

std::vector<Batch> batch_iter(const Dataset& dataset, std::size_t batch_size, std::size_t max_len,
                              std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order(dataset.examples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    shuffle(order, rng);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(make_batch(dataset, std::span(order).subspan(start, n), max_len));
  }
  return batches;
}

}  // namespace ffattn
