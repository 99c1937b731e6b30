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

#ifndef FFATTN_TRAIN_H_
#define FFATTN_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffattn/config.h"
#include "ffattn/model.h"
#include "ffattn/tasks.h"

namespace ffattn {

struct MetricsRecord {
  int step = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double task_loss = 0.0;
  double ortho_penalty = 0.0;
  // Unweighted distance from orthogonality after the update.
  double ortho_deviation = 0.0;
  std::optional<double> eval_accuracy;
  std::optional<double> eval_loss;
  std::optional<double> wall_time_ms;
  bool diverged = false;
};

// One JSON object, no trailing newline. Non-finite losses become null.
std::string to_json_line(const MetricsRecord& record);

struct TaskData {
  Dataset train;
  Dataset eval;
};

// Generates or loads the train and eval splits described by the task config.
TaskData load_task_data(const TaskConfig& task);

// The model config with vocab_size, num_classes and task taken from the
// data (largest over both splits).
ModelConfig resolve_model_config(const ModelConfig& model, const TaskData& data);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::size_t count = 0;
};

// Fraction of positions where predictions equal labels.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Row-wise argmax of [B x C] logits; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

// Deterministic evaluation with dropout off. Throws ConfigError when the
// dataset schema does not match the model head.
template <typename T>
EvalResult evaluate(const Model<T>& model, const Dataset& dataset, std::size_t batch_size);

template <typename T>
struct AccumulatedGradients {
  // One gradient per model parameter, averaged over the micro-batches.
  std::vector<Tensor<T>> grads;
  double loss = 0.0;
  double task_loss = 0.0;
  double penalty = 0.0;
  // False when a loss or gradient value is not finite.
  bool finite = true;
};

// Averages per-micro-batch mean losses and their gradients.
template <typename T>
AccumulatedGradients<T> accumulate_gradients(const Model<T>& model,
                                             std::span<const Batch> micro_batches,
                                             const ForwardOptions& options = {});

struct TrainOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 1;
  bool override_budget = false;
  // Human-readable progress; nothing is printed when null.
  std::ostream* log = nullptr;
};

struct TrainResult {
  MetricsRecord final;
  ParamAccount account;
  int steps = 0;
  bool diverged = false;
  bool reached_target = false;
  std::filesystem::path checkpoint;
};

// Refuses (ConfigError naming the ratio) when the kernel budget fails and
// override_budget is not set. Writes <out_dir>/metrics.jsonl and, unless the
// run diverges, <out_dir>/checkpoint.ffck.
template <typename T>
TrainResult train(const TrainConfig& config, const TrainOptions& options);

// Dispatches on config.precision.
TrainResult train_with_precision(const TrainConfig& config, const TrainOptions& options);

struct SeedRow {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double eval_loss = 0.0;
  int steps = 0;
  bool diverged = false;
};

struct MetricSummary {
  double mean = 0.0;
  double best = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
};

struct SeedSummary {
  std::vector<SeedRow> rows;
  MetricSummary accuracy;
  MetricSummary eval_loss;  // best = lowest
  std::size_t diverged = 0;
  // Standard deviation of accuracy above 2 points.
  bool high_variance = false;
};

// Aggregates over rows that did not diverge.
SeedSummary summarize_seeds(std::vector<SeedRow> rows);

// Trains one model per configured seed, in order, each in
// <out_dir>/seed_<s>, and writes <out_dir>/summary.json.
SeedSummary run_seeds(const TrainConfig& config, const TrainOptions& options);

std::string format_summary(const SeedSummary& summary);

}  // namespace ffattn

#endif  // FFATTN_TRAIN_H_
