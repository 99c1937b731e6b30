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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ffattn/bench.h"
#include "ffattn/checkpoint.h"
#include "ffattn/config.h"
#include "ffattn/errors.h"
#include "ffattn/optimizer.h"
#include "ffattn/train.h"

namespace ffattn {
namespace {

namespace fs = std::filesystem;
using TD = Tensor<double>;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ffattn_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.model.n_layers = 1;
  c.model.ffn_dim = 16;
  c.model.max_len = 32;
  c.model.kernel.head_dim = 8;
  c.task.source = TaskSource::kText;
  c.task.train_count = 64;
  c.task.eval_count = 32;
  c.task.len = 32;
  c.task.vocab_size = 32;
  c.schedule.warmup_steps = 2;
  c.schedule.total_steps = 6;
  c.micro_batch = 8;
  c.eval_every = 3;
  return c;
}

TEST(Schedule, WarmupThenDecay) {
  OptimizerConfig o;
  o.lr = 1.0;
  ScheduleConfig s{10, 110, DecayKind::kLinear};
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 1), 0.1);
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 10), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 60), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 110), 0.0);
  s.decay = DecayKind::kInvSqrt;
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 40), 0.5);
  s.warmup_steps = 0;
  s.decay = DecayKind::kLinear;
  EXPECT_DOUBLE_EQ(scheduled_lr(o, s, 1), 1.0 * 109.0 / 110.0);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  OptimizerConfig o;
  o.lr = 0.1;
  o.eps = 0.0;
  Adam<double> adam(o, ScheduleConfig{0, 100, DecayKind::kLinear});
  const TD p = TD::parameter({1, 3}, {1.0, 2.0, 3.0});
  const TD g({1, 3}, {0.5, -2.0, 1e-3});
  const TD params[] = {p};
  const TD grads[] = {g};
  const auto next = adam.step(params, grads);
  const double lr = 0.1 * 99.0 / 100.0;
  EXPECT_NEAR(next[0][0], 1.0 - lr, 1e-15);
  EXPECT_NEAR(next[0][1], 2.0 + lr, 1e-15);
  EXPECT_NEAR(next[0][2], 3.0 - lr, 1e-15);
  EXPECT_EQ(next[0].param_id(), p.param_id());
}

TEST(Adam, DecoupledWeightDecay) {
  OptimizerConfig o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  Adam<double> adam(o, ScheduleConfig{0, 10, DecayKind::kInvSqrt});
  const TD params[] = {TD::parameter({1, 1}, {2.0})};
  const TD grads[] = {TD({1, 1}, {0.0})};
  EXPECT_NEAR(adam.step(params, grads)[0][0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(ConfigFile, ParsesSectionsAndTypes) {
  const auto f = ConfigFile::parse(
      "# comment\n[model]\nd_model = 32 ; trailing\n\n[train]\nseeds = 3, 4,5\nrecord_wall_time = "
      "true\n[optimizer]\nlr = 2.5e-4\n",
      "mem");
  EXPECT_EQ(f.get_int("model.d_model", 0), 32);
  EXPECT_EQ(f.get_u64_list("train.seeds", {}), (std::vector<std::uint64_t>{3, 4, 5}));
  EXPECT_TRUE(f.get_bool("train.record_wall_time", false));
  EXPECT_DOUBLE_EQ(f.get_double("optimizer.lr", 0), 2.5e-4);
  EXPECT_EQ(f.get_int("model.n_heads", 7), 7);
  EXPECT_NO_THROW(f.reject_unused());
}

TEST(ConfigFile, LineNumberedErrors) {
  auto line_of = [](const std::string& text) {
    try {
      parse_train_config(ConfigFile::parse(text, "cfg"));
    } catch (const ConfigParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("[model]\nd_model = 32\nwidth = 4\n"), 3u);
  EXPECT_EQ(line_of("[model]\n\nd_model = abc\n"), 3u);
  EXPECT_EQ(line_of("d_model = 32\n"), 1u);
  EXPECT_EQ(line_of("[model\n"), 1u);
  EXPECT_EQ(line_of("[kernel]\n\n\nvariant = relu\n"), 4u);
  EXPECT_EQ(line_of("[model]\nd_model = 1\nd_model = 2\n"), 3u);
  EXPECT_EQ(line_of("[train]\nseeds = 1,,2\n"), 2u);
  try {
    ConfigFile::load("/definitely/missing.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/definitely/missing.cfg"), std::string::npos);
  }
}

TEST(ConfigFile, TrainConfigInvariants) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.schedule.total_steps = c.schedule.warmup_steps;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.accumulation_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.micro_batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ConfigFile, ShippedConfigsLoad) {
  for (const char* name : {"small.cfg", "glu3.cfg", "text_linear.cfg", "text_oglu.cfg",
                           "listops.cfg", "match.cfg"}) {
    EXPECT_NO_THROW(load_train_config(fs::path(FFATTN_CONFIG_DIR) / name)) << name;
  }
}

TEST(ConfigFile, ModelTextRoundTrip) {
  ModelConfig m;
  m.d_model = 48;
  m.n_heads = 3;
  m.eps = 1e-7;
  m.dropout = 0.15;
  m.pooling = Pooling::kCls;
  m.kernel.variant = KernelVariant::kAoglu;
  m.kernel.depth = 3;
  m.kernel.head_dim = 16;
  m.kernel.gate_rank = 3;
  m.kernel.ortho_reg_weight = 0.003;
  m.kernel.lowrank_all_layers = true;
  const std::string text = to_config_text(m);
  const auto f = ConfigFile::parse(text, "rt");
  const ModelConfig back = parse_model_config(f);
  EXPECT_NO_THROW(f.reject_unused());
  EXPECT_EQ(to_config_text(back), text);
  EXPECT_EQ(back.eps, m.eps);
  EXPECT_EQ(back.kernel.ortho_reg_weight, m.kernel.ortho_reg_weight);
}

TEST(Checkpoint, RoundTripAndConversion) {
  ModelConfig c = tiny_train_config().model;
  c.vocab_size = 20;
  c.kernel.variant = KernelVariant::kAoglu;
  c.kernel.depth = 2;
  const Model<double> m(c, 5);
  const fs::path p = scratch("ck.ffck");
  save_checkpoint(p, m);
  const Model<double> back = load_checkpoint<double>(p);
  EXPECT_EQ(to_config_text(back.config()), to_config_text(c));
  const auto a = m.parameters();
  const auto b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].to_vector(), b[i].to_vector());
  const Model<float> f = load_checkpoint<float>(p);
  EXPECT_EQ(f.parameters()[3][0], static_cast<float>(a[3][0]));

  std::string bytes = slurp(p);
  EXPECT_EQ(bytes.substr(0, 8), "FFATTNCK");
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(read_checkpoint(p), DataError);
  bytes[8] = 9;
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_THROW(read_checkpoint(p), DataError);
}

TEST(Accumulation, MicroBatchesEqualOneLargeBatch) {
  ModelConfig c = tiny_train_config().model;
  c.vocab_size = 32;
  c.dropout = 0.0;
  c.kernel.variant = KernelVariant::kOglu;
  const Model<double> model(c, 3);
  const Dataset ds = gen_text_classification(1, 16, 24, 32, 2);
  std::vector<std::size_t> all(16);
  for (std::size_t i = 0; i < 16; ++i) all[i] = i;
  const Batch big = make_batch(ds, all, 32);
  std::vector<Batch> micro;
  for (std::size_t k = 0; k < 4; ++k) {
    micro.push_back(make_batch(ds, std::span<const std::size_t>(all).subspan(4 * k, 4), 32));
  }
  const auto one = accumulate_gradients(model, std::span<const Batch>(&big, 1));
  const auto many = accumulate_gradients(model, micro);
  EXPECT_NEAR(one.loss, many.loss, 1e-12);
  Adam<double> a1(OptimizerConfig{}, ScheduleConfig{0, 10, DecayKind::kLinear});
  Adam<double> a2(OptimizerConfig{}, ScheduleConfig{0, 10, DecayKind::kLinear});
  const auto params = model.parameters();
  const auto p1 = a1.step(params, one.grads);
  const auto p2 = a2.step(params, many.grads);
  double worst = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    for (std::size_t j = 0; j < p1[i].numel(); ++j) {
      worst = std::max(worst, std::abs(p1[i][j] - p2[i][j]));
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Evaluate, AccuracyHelperAndDeterminism) {
  const std::vector<int> labels{0, 1, 1, 0};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  EXPECT_EQ(accuracy(std::vector<int>{1, 1, 1, 1}, labels), 0.5);
  EXPECT_THROW(accuracy(std::vector<int>{1}, labels), ContractError);

  ModelConfig c = tiny_train_config().model;
  c.vocab_size = 64;
  c.max_len = 64;
  const Model<float> m(c, 9);
  const Dataset ds = gen_text_classification(11, 2000, 64, 64, 2);
  const EvalResult r1 = evaluate(m, ds, 128);
  const EvalResult r2 = evaluate(m, ds, 128);
  EXPECT_EQ(r1.accuracy, r2.accuracy);
  EXPECT_EQ(r1.mean_loss, r2.mean_loss);
  EXPECT_EQ(r1.count, 2000u);
  EXPECT_NEAR(r1.accuracy, 0.5, 0.05);
  EXPECT_THROW(evaluate(m, gen_matching(1, 10, 20, 30), 4), ConfigError);
}

TEST(Seeds, SummaryArithmetic) {
  std::vector<SeedRow> same(5, SeedRow{0, 0.9, 0.3, 10, false});
  for (std::size_t i = 0; i < 5; ++i) same[i].seed = i + 1;
  const SeedSummary s = summarize_seeds(same);
  EXPECT_EQ(s.rows.size(), 5u);
  EXPECT_EQ(s.accuracy.std, 0.0);
  EXPECT_DOUBLE_EQ(s.accuracy.mean, 0.9);
  EXPECT_FALSE(s.high_variance);

  const SeedSummary v = summarize_seeds({{1, 0.90, 0.3, 5, false},
                                         {2, 0.96, 0.2, 5, false},
                                         {3, 0.10, 9.0, 2, true}});
  EXPECT_EQ(v.diverged, 1u);
  EXPECT_DOUBLE_EQ(v.accuracy.mean, 0.93);
  EXPECT_DOUBLE_EQ(v.accuracy.best, 0.96);
  EXPECT_DOUBLE_EQ(v.eval_loss.best, 0.2);
  EXPECT_NEAR(v.accuracy.std, std::sqrt(2 * 0.03 * 0.03), 1e-15);
  EXPECT_TRUE(v.high_variance);
  const std::string text = format_summary(v);
  EXPECT_NE(text.find("DIVERGED"), std::string::npos);
  EXPECT_NE(text.find("HIGH VARIANCE"), std::string::npos);
}

TEST(Bench, SlopeFitAndCsv) {
  const std::vector<double> x{256, 512, 1024, 2048};
  std::vector<double> y;
  for (double v : x) y.push_back(3e-6 * v * v);
  EXPECT_NEAR(fit_loglog_slope(x, y), 2.0, 1e-12);
  BenchOptions o;
  o.lengths = {16, 32, 64};
  o.samples = 3;
  o.d_model = 16;
  o.n_heads = 2;
  const BenchResult r = bench_scaling(o);
  EXPECT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.fits.size(), 2u);
  const std::string csv = bench_csv(r);
  EXPECT_EQ(csv.rfind("kind,length,median_ms,repeats\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  for (const auto& row : r.rows) EXPECT_GE(row.repeats, 3);
  o.lengths = {16, 32};
  EXPECT_THROW(bench_scaling(o), ConfigError);
  o.lengths = {16, 64, 32};
  EXPECT_THROW(bench_scaling(o), ConfigError);
}

TEST(Train, RefusesOverBudgetUnlessOverridden) {
  TrainConfig c = tiny_train_config();
  c.model.kernel.variant = KernelVariant::kGlu;
  c.model.kernel.depth = 3;
  TrainOptions o;
  o.out_dir = scratch("over");
  try {
    train<float>(c, o);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("%"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(o.out_dir / "metrics.jsonl"));
  o.override_budget = true;
  EXPECT_NO_THROW(train<float>(c, o));
}

TEST(Train, MetricsStreamIsByteIdentical) {
  const TrainConfig c = tiny_train_config();
  TrainOptions o;
  o.out_dir = scratch("det_a");
  const TrainResult a = train<float>(c, o);
  const std::string first = slurp(o.out_dir / "metrics.jsonl");
  o.out_dir = scratch("det_b");
  train<float>(c, o);
  EXPECT_EQ(first, slurp(o.out_dir / "metrics.jsonl"));
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 6);
  EXPECT_NE(first.find("\"eval_accuracy\":null"), std::string::npos);
  EXPECT_TRUE(fs::exists(a.checkpoint));
  EXPECT_EQ(a.steps, 6);
}

TEST(Train, NonFiniteLossMarksDivergence) {
  TrainConfig c = tiny_train_config();
  c.optimizer.lr = 1e38;
  c.optimizer.eps = 1e-30;
  TrainOptions o;
  o.out_dir = scratch("div");
  const TrainResult r = train<float>(c, o);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.final.diverged);
  EXPECT_FALSE(fs::exists(o.out_dir / "checkpoint.ffck"));
  const std::string m = slurp(o.out_dir / "metrics.jsonl");
  EXPECT_NE(m.find("\"diverged\":true"), std::string::npos);
}

}  // namespace
}  // namespace ffattn
