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

#ifndef FFATTN_CONFIG_H_
#define FFATTN_CONFIG_H_

// Flat "key = value" configuration files with [section] headers.
//
//   # comment            ; also a comment
//   [model]
//   d_model = 64
//   attention = kernel_linear
//
// Keys are addressed as "section.key". Every key in a file must be consumed
// by the schema reader; leftovers are rejected with their line number. The
// full schema is documented in README.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ffattn/errors.h"
#include "ffattn/model.h"

namespace ffattn {

class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text, std::string source = "<config>");
  // Throws ConfigError naming the path when the file cannot be read.
  static ConfigFile load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::string get_string(std::string_view key, std::string fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Comma-separated unsigned integers.
  std::vector<std::uint64_t> get_u64_list(std::string_view key,
                                          std::vector<std::uint64_t> fallback) const;

  // Line of a key, 0 when absent.
  std::size_t line_of(std::string_view key) const;

  // Throws ConfigParseError for the first key no getter has read.
  void reject_unused() const;
  const std::string& source() const { return source_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
  };
  const Entry* find(std::string_view key) const;
  [[noreturn]] void fail(const Entry& entry, std::string_view key, const std::string& what) const;

  std::string source_;
  std::map<std::string, Entry, std::less<>> entries_;
};

enum class Precision { kF32, kF64 };
std::string_view to_string(Precision precision);
Precision parse_precision(std::string_view name);

enum class DecayKind { kLinear, kInvSqrt };
enum class TaskSource { kListOps, kText, kMatch, kTsv };

struct OptimizerConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 0.0;
};

struct ScheduleConfig {
  int warmup_steps = 100;
  int total_steps = 2000;
  DecayKind decay = DecayKind::kLinear;
};

struct TaskConfig {
  TaskSource source = TaskSource::kText;
  std::uint64_t seed = 1234;
  std::size_t train_count = 2000;
  std::size_t eval_count = 500;
  std::size_t len = 128;
  int vocab_size = 64;
  int classes = 2;
  int max_depth = 4;
  std::string train_path;
  std::string eval_path;
  TaskKind schema = TaskKind::kClassify;
};

struct TrainConfig {
  ModelConfig model;
  TaskConfig task;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  int micro_batch = 16;
  int accumulation_steps = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int eval_every = 100;
  double budget_limit = 0.10;
  // Stop once evaluation accuracy reaches this value.
  std::optional<double> target_accuracy;
  Precision precision = Precision::kF32;
  // Include wall_time_ms in the metrics stream (breaks byte-identical
  // reruns).
  bool record_wall_time = false;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Reads [model] and [kernel]; fields not present keep their defaults.
// kernel.head_dim defaults to d_model / n_heads.
ModelConfig parse_model_config(const ConfigFile& file);
TrainConfig parse_train_config(const ConfigFile& file);
TrainConfig load_train_config(const std::filesystem::path& path);

// Canonical text of a model config: every field, fixed order, shortest
// round-trip number formatting. parse_model_config inverts it exactly.
std::string to_config_text(const ModelConfig& config);

}  // namespace ffattn

#endif  // FFATTN_CONFIG_H_
