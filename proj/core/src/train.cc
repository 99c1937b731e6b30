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

#include "ffattn/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "ffattn/checkpoint.h"
#include "ffattn/errors.h"
#include "ffattn/ops.h"
#include "ffattn/optimizer.h"
#include "ffattn/rng.h"

namespace ffattn {
namespace {

using Json = nlohmann::ordered_json;

Json finite_or_null(double value) {
  return std::isfinite(value) ? Json(value) : Json(nullptr);
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Endless sequence of micro-batches, reshuffled every epoch.
class MicroBatchStream {
 public:
  MicroBatchStream(const Dataset& dataset, std::size_t batch_size, std::size_t max_len,
                   std::uint64_t seed)
      : dataset_(dataset), batch_size_(batch_size), max_len_(max_len), seed_(seed) {}

  Batch next() {
    if (pos_ == batches_.size()) {
      const std::uint64_t shuffle = Rng::derive(seed_, epoch_++).next_u64();
      batches_ = batch_iter(dataset_, batch_size_, max_len_, shuffle);
      pos_ = 0;
    }
    return batches_[pos_++];
  }

 private:
  const Dataset& dataset_;
  std::size_t batch_size_;
  std::size_t max_len_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<Batch> batches_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["seed"] = r.seed;
  j["lr"] = r.lr;
  j["train_loss"] = finite_or_null(r.train_loss);
  j["task_loss"] = finite_or_null(r.task_loss);
  j["ortho_penalty"] = finite_or_null(r.ortho_penalty);
  j["ortho_deviation"] = finite_or_null(r.ortho_deviation);
  j["eval_accuracy"] = r.eval_accuracy ? Json(*r.eval_accuracy) : Json(nullptr);
  j["eval_loss"] = r.eval_loss ? finite_or_null(*r.eval_loss) : Json(nullptr);
  if (r.wall_time_ms) j["wall_time_ms"] = *r.wall_time_ms;
  j["diverged"] = r.diverged;
  return j.dump();
}

TaskData load_task_data(const TaskConfig& task) {
  const std::uint64_t train_seed = Rng::derive(task.seed, 0).next_u64();
  const std::uint64_t eval_seed = Rng::derive(task.seed, 1).next_u64();
  switch (task.source) {
    case TaskSource::kListOps:
      return {gen_listops(train_seed, task.train_count, task.len, task.max_depth),
              gen_listops(eval_seed, task.eval_count, task.len, task.max_depth)};
    case TaskSource::kText:
      return {gen_text_classification(train_seed, task.train_count, task.len, task.vocab_size,
                                      task.classes),
              gen_text_classification(eval_seed, task.eval_count, task.len, task.vocab_size,
                                      task.classes)};
    case TaskSource::kMatch:
      return {gen_matching(train_seed, task.train_count, task.len, task.vocab_size),
              gen_matching(eval_seed, task.eval_count, task.len, task.vocab_size)};
    case TaskSource::kTsv:
      return {load_tsv_dataset(task.train_path, task.schema),
              load_tsv_dataset(task.eval_path, task.schema)};
  }
  throw ConfigError("task.source: unsupported");
}

ModelConfig resolve_model_config(const ModelConfig& model, const TaskData& data) {
  if (data.train.kind != data.eval.kind) {
    throw ConfigError("task: train and eval splits have different schemas");
  }
  ModelConfig out = model;
  out.vocab_size = static_cast<int>(std::max(data.train.vocab_size(), data.eval.vocab_size()));
  out.num_classes = std::max(data.train.classes, data.eval.classes);
  out.task = data.train.kind;
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) {
    throw DimensionError("argmax_rows: expected a matrix, got " + shape_string(logits.shape()));
  }
  std::vector<int> out(logits.rows());
  const auto d = logits.data();
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = d.subspan(i * c, c);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template <typename T>
EvalResult evaluate(const Model<T>& model, const Dataset& dataset, std::size_t batch_size) {
  if (dataset.kind != model.config().task) {
    throw ConfigError("evaluate: dataset schema " + std::string(to_string(dataset.kind)) +
                      " does not match model task " +
                      std::string(to_string(model.config().task)));
  }
  NoGradGuard no_grad;
  EvalResult result;
  double loss_sum = 0.0;
  std::size_t hits = 0;
  const auto batches =
      batch_iter(dataset, std::max<std::size_t>(batch_size, 1), model.config().max_len,
                 std::nullopt);
  for (const Batch& batch : batches) {
    const Tensor<T> logits = forward_logits(model, batch);
    loss_sum += static_cast<double>(cross_entropy(logits, batch.labels).item()) *
                static_cast<double>(batch.size());
    const auto predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == batch.labels[i];
    result.count += batch.size();
  }
  if (result.count > 0) {
    result.accuracy = static_cast<double>(hits) / static_cast<double>(result.count);
    result.mean_loss = loss_sum / static_cast<double>(result.count);
  }
  return result;
}

template <typename T>
AccumulatedGradients<T> accumulate_gradients(const Model<T>& model,
                                             std::span<const Batch> micro_batches,
                                             const ForwardOptions& options) {
  if (micro_batches.empty()) throw ContractError("accumulate_gradients: no micro-batches");
  const auto params = model.parameters();
  AccumulatedGradients<T> out;
  std::vector<std::vector<T>> sums(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) sums[i].assign(params[i].numel(), T(0));

  for (const Batch& batch : micro_batches) {
    LossTerms<T> terms = model_loss(model, batch, options);
    out.loss += static_cast<double>(terms.total.item());
    out.task_loss += static_cast<double>(terms.task.item());
    out.penalty += static_cast<double>(terms.penalty.item());
    const GradMap<T> grads = backward(terms.total, std::span<const Tensor<T>>(params));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = grads.at(params[i]).data();
      for (std::size_t j = 0; j < g.size(); ++j) sums[i][j] += g[j];
    }
  }

  const T k = static_cast<T>(micro_batches.size());
  out.loss /= static_cast<double>(micro_batches.size());
  out.task_loss /= static_cast<double>(micro_batches.size());
  out.penalty /= static_cast<double>(micro_batches.size());
  out.finite = std::isfinite(out.loss);
  out.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (T& v : sums[i]) v /= k;
    Tensor<T> g(params[i].shape(), std::move(sums[i]));
    out.finite = out.finite && all_finite(g);
    out.grads.push_back(std::move(g));
  }
  return out;
}

template <typename T>
TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const TaskData data = load_task_data(config.task);
  const ModelConfig model_config = resolve_model_config(config.model, data);
  model_config.validate();

  TrainResult result;
  result.account = count_params(model_config);
  const BudgetVerdict verdict = budget_check(result.account, config.budget_limit);
  if (!verdict.pass && !options.override_budget) {
    std::ostringstream msg;
    msg << "kernel parameter ratio " << std::setprecision(4) << verdict.ratio * 100.0
        << "% is not below the " << verdict.limit * 100.0
        << "% budget (" << result.account.kernel_params << " kernel / "
        << result.account.base_params << " base); pass --override-budget to train anyway";
    throw ConfigError(msg.str());
  }

  std::filesystem::create_directories(options.out_dir);
  const auto metrics_path = options.out_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write " + metrics_path.string());

  Model<T> model(model_config, options.seed);
  Adam<T> optimizer(config.optimizer, config.schedule);
  MicroBatchStream stream(data.train, static_cast<std::size_t>(config.micro_batch),
                          static_cast<std::size_t>(model_config.max_len),
                          Rng::derive(options.seed, 1).next_u64());
  Rng dropout_rng = Rng::derive(options.seed, 2);
  const ForwardOptions forward{model_config.dropout > 0.0, &dropout_rng};
  const auto start = std::chrono::steady_clock::now();

  std::vector<Batch> micro(static_cast<std::size_t>(config.accumulation_steps));
  for (int step = 1; step <= config.schedule.total_steps; ++step) {
    for (Batch& b : micro) b = stream.next();
    AccumulatedGradients<T> acc = accumulate_gradients(model, micro, forward);

    MetricsRecord record;
    record.step = step;
    record.seed = options.seed;
    record.train_loss = acc.loss;
    record.task_loss = acc.task_loss;
    record.ortho_penalty = acc.penalty;

    if (acc.finite) {
      const auto params = model.parameters();
      const auto updated = optimizer.step(params, acc.grads);
      record.diverged = !std::all_of(updated.begin(), updated.end(),
                                     [](const Tensor<T>& p) { return all_finite(p); });
      if (!record.diverged) {
        model.set_parameters(updated);
        NoGradGuard no_grad;
        record.ortho_deviation = static_cast<double>(model.orthogonality_deviation().item());
      }
    } else {
      record.diverged = true;
    }
    record.lr = scheduled_lr(config.optimizer, config.schedule, step);

    const bool last = step == config.schedule.total_steps;
    if (!record.diverged && (step % config.eval_every == 0 || last)) {
      const EvalResult ev = evaluate(model, data.eval, static_cast<std::size_t>(config.micro_batch) * 4);
      record.eval_accuracy = ev.accuracy;
      record.eval_loss = ev.mean_loss;
      result.reached_target = config.target_accuracy && ev.accuracy >= *config.target_accuracy;
    }
    if (config.record_wall_time) {
      record.wall_time_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - start)
                                .count();
    }
    metrics << to_json_line(record) << '\n';

    if (options.log && (record.eval_accuracy || record.diverged)) {
      *options.log << "seed " << options.seed << " step " << step << " loss "
                   << std::setprecision(5) << record.train_loss;
      if (record.eval_accuracy) *options.log << " eval_acc " << *record.eval_accuracy;
      if (record.diverged) *options.log << " DIVERGED";
      *options.log << '\n';
    }

    result.final = record;
    result.steps = step;
    if (record.diverged) {
      result.diverged = true;
      return result;
    }
    if (result.reached_target) break;
  }

  if (!result.final.eval_accuracy) {
    const EvalResult ev = evaluate(model, data.eval, static_cast<std::size_t>(config.micro_batch) * 4);
    result.final.eval_accuracy = ev.accuracy;
    result.final.eval_loss = ev.mean_loss;
  }
  result.checkpoint = options.out_dir / "checkpoint.ffck";
  save_checkpoint(result.checkpoint, model);
  return result;
}

TrainResult train_with_precision(const TrainConfig& config, const TrainOptions& options) {
  return config.precision == Precision::kF64 ? train<double>(config, options)
                                             : train<float>(config, options);
}

SeedSummary summarize_seeds(std::vector<SeedRow> rows) {
  SeedSummary s;
  s.rows = std::move(rows);
  std::vector<const SeedRow*> ok;
  for (const auto& r : s.rows) {
    if (r.diverged) {
      ++s.diverged;
    } else {
      ok.push_back(&r);
    }
  }
  if (ok.empty()) return s;
  const double n = static_cast<double>(ok.size());
  // Shift by the first row so identical runs give an exact zero spread.
  auto summarize = [&](auto field, bool higher_is_better) {
    MetricSummary m;
    const double x0 = field(*ok.front());
    double sum = 0.0;
    double sq = 0.0;
    m.best = x0;
    for (const SeedRow* r : ok) {
      const double x = field(*r);
      sum += x - x0;
      sq += (x - x0) * (x - x0);
      m.best = higher_is_better ? std::max(m.best, x) : std::min(m.best, x);
    }
    m.mean = x0 + sum / n;
    if (ok.size() > 1) m.std = std::sqrt(std::max(0.0, sq - sum * sum / n) / (n - 1.0));
    return m;
  };
  s.accuracy = summarize([](const SeedRow& r) { return r.accuracy; }, true);
  s.eval_loss = summarize([](const SeedRow& r) { return r.eval_loss; }, false);
  s.high_variance = s.accuracy.std > 0.02;
  return s;
}

SeedSummary run_seeds(const TrainConfig& config, const TrainOptions& options) {
  if (config.seeds.empty()) throw ConfigError("train.seeds: at least one seed required");
  std::vector<SeedRow> rows;
  for (std::uint64_t seed : config.seeds) {
    TrainOptions per_seed = options;
    per_seed.seed = seed;
    per_seed.out_dir = options.out_dir / ("seed_" + std::to_string(seed));
    const TrainResult r = train_with_precision(config, per_seed);
    rows.push_back({seed, r.final.eval_accuracy.value_or(0.0), r.final.eval_loss.value_or(0.0),
                    r.steps, r.diverged});
  }
  SeedSummary summary = summarize_seeds(std::move(rows));

  Json j;
  Json seeds = Json::array();
  for (const auto& r : summary.rows) {
    seeds.push_back({{"seed", r.seed},
                     {"eval_accuracy", r.diverged ? Json(nullptr) : Json(r.accuracy)},
                     {"eval_loss", r.diverged ? Json(nullptr) : finite_or_null(r.eval_loss)},
                     {"steps", r.steps},
                     {"diverged", r.diverged}});
  }
  j["seeds"] = seeds;
  j["aggregate"] = {{"eval_accuracy",
                     {{"mean", summary.accuracy.mean},
                      {"best", summary.accuracy.best},
                      {"std", summary.accuracy.std}}},
                    {"eval_loss",
                     {{"mean", summary.eval_loss.mean},
                      {"best", summary.eval_loss.best},
                      {"std", summary.eval_loss.std}}},
                    {"diverged", summary.diverged},
                    {"high_variance", summary.high_variance}};
  std::ofstream out(options.out_dir / "summary.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  return summary;
}

std::string format_summary(const SeedSummary& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "seed      accuracy   eval_loss  steps  status\n";
  for (const auto& r : s.rows) {
    os << std::left << std::setw(10) << r.seed << std::right << std::setw(8) << r.accuracy
       << std::setw(12) << r.eval_loss << std::setw(7) << r.steps << "  "
       << (r.diverged ? "DIVERGED (excluded)" : "ok") << '\n';
  }
  os << "mean      " << std::setw(8) << s.accuracy.mean << std::setw(12) << s.eval_loss.mean << '\n';
  os << "best      " << std::setw(8) << s.accuracy.best << std::setw(12) << s.eval_loss.best << '\n';
  os << "std       " << std::setw(8) << s.accuracy.std << std::setw(12) << s.eval_loss.std << '\n';
  if (s.diverged > 0) os << "WARNING: " << s.diverged << " seed(s) diverged\n";
  if (s.high_variance) os << "HIGH VARIANCE: accuracy std exceeds 2 points\n";
  return os.str();
}

#define FFATTN_INSTANTIATE(T)                                                                   \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);                                   \
  template EvalResult evaluate<T>(const Model<T>&, const Dataset&, std::size_t);                \
  template AccumulatedGradients<T> accumulate_gradients<T>(const Model<T>&,                      \
                                                           std::span<const Batch>,              \
                                                           const ForwardOptions&);              \
  template TrainResult train<T>(const TrainConfig&, const TrainOptions&);
FFATTN_INSTANTIATE(float)
FFATTN_INSTANTIATE(double)
#undef FFATTN_INSTANTIATE

}  // namespace ffattn
