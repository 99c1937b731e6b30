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

#include "cli.h"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ffattn/bench.h"
#include "ffattn/checkpoint.h"
#include "ffattn/config.h"
#include "ffattn/errors.h"
#include "ffattn/train.h"
#include "ffattn/verify.h"

namespace ffattn {
namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "ffattn-out";
  std::optional<std::string> precision;
  bool override_budget = false;
};

TrainConfig load_config(const Globals& g) {
  TrainConfig config;
  if (!g.config_path.empty()) {
    config = load_train_config(g.config_path);
  }
  if (g.precision) config.precision = parse_precision(*g.precision);
  if (g.seed) config.seeds = {*g.seed};
  config.validate();
  return config;
}

std::string percent(double ratio) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << ratio * 100.0 << "%";
  return os.str();
}

int cmd_train(const Globals& g, std::ostream& out) {
  const TrainConfig config = load_config(g);
  TrainOptions options;
  options.out_dir = g.out_dir;
  options.seed = config.seeds.front();
  options.override_budget = g.override_budget;
  options.log = &out;
  const TrainResult r = train_with_precision(config, options);
  out << "params: " << r.account.kernel_params << " kernel / " << r.account.base_params
      << " base (" << percent(r.account.ratio) << ")\n";
  if (r.diverged) {
    out << "diverged at step " << r.steps << "; no checkpoint written\n";
    return 3;
  }
  out << std::setprecision(4) << "final step " << r.steps << ": eval accuracy "
      << r.final.eval_accuracy.value_or(0.0) << ", eval loss " << r.final.eval_loss.value_or(0.0)
      << (r.reached_target ? " (target reached)" : "") << "\n";
  out << "metrics: " << (options.out_dir / "metrics.jsonl").string() << "\n";
  out << "checkpoint: " << r.checkpoint.string() << "\n";
  return 0;
}

template <typename T>
EvalResult eval_checkpoint(const std::string& path, const Dataset& eval, std::size_t batch) {
  const Model<T> model = load_checkpoint<T>(path);
  return evaluate(model, eval, batch);
}

int cmd_eval(const Globals& g, const std::string& checkpoint, std::ostream& out) {
  if (!std::filesystem::exists(checkpoint)) {
    throw ConfigError("checkpoint not found: " + checkpoint);
  }
  const TrainConfig config = load_config(g);
  const TaskData data = load_task_data(config.task);
  const auto batch = static_cast<std::size_t>(config.micro_batch) * 4;
  const EvalResult r = config.precision == Precision::kF64
                           ? eval_checkpoint<double>(checkpoint, data.eval, batch)
                           : eval_checkpoint<float>(checkpoint, data.eval, batch);
  out << std::setprecision(6) << "examples " << r.count << "\naccuracy " << r.accuracy
      << "\nmean_loss " << r.mean_loss << "\n";
  return 0;
}

int cmd_seeds(const Globals& g, std::ostream& out) {
  TrainConfig config = load_config(g);
  TrainOptions options;
  options.out_dir = g.out_dir;
  options.override_budget = g.override_budget;
  options.log = &out;
  const SeedSummary s = run_seeds(config, options);
  out << format_summary(s);
  out << "summary: " << (options.out_dir / "summary.json").string() << "\n";
  return s.diverged > 0 ? 3 : 0;
}

int cmd_bench(const Globals& g, const std::vector<std::size_t>& lengths, int samples,
              std::ostream& out) {
  BenchOptions options;
  if (!g.config_path.empty()) {
    const TrainConfig config = load_config(g);
    options.kernel = config.model.kernel;
  }
  if (!lengths.empty()) options.lengths = lengths;
  options.samples = samples;
  if (g.seed) options.seed = *g.seed;
  const BenchResult r = bench_scaling(options);
  const std::string csv = bench_csv(r);
  std::filesystem::create_directories(g.out_dir);
  const auto csv_path = std::filesystem::path(g.out_dir) / "bench.csv";
  std::ofstream(csv_path) << csv;
  out << csv;
  for (const auto& fit : r.fits) {
    out << "exponent " << to_string(fit.kind) << " " << std::setprecision(3) << fit.exponent << "\n";
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  out << "csv: " << csv_path.string() << "\n";
  return 0;
}

int cmd_verify(const Globals& g, std::ostream& out) {
  VerifyOptions options;
  if (g.seed) options.seed = *g.seed;
  const VerifyReport report = run_verify(options);
  out << report.format();
  return report.passed() ? 0 : 1;
}

int cmd_params(const Globals& g, std::ostream& out) {
  const TrainConfig config = load_config(g);
  const ModelConfig model = resolve_model_config(config.model, load_task_data(config.task));
  model.validate();
  const ParamAccount acct = count_params(model);
  const BudgetVerdict v = budget_check(acct, config.budget_limit);
  out << "kernel variant " << to_string(model.kernel.variant) << ", depth " << model.kernel.depth
      << ", head_dim " << model.kernel.head_dim << ", heads " << model.n_heads << ", layers "
      << model.n_layers << "\n";
  out << "base_params " << acct.base_params << "\n";
  out << "kernel_params " << acct.kernel_params << "\n";
  out << "ratio " << std::setprecision(6) << acct.ratio << " (" << percent(acct.ratio) << ")\n";
  out << "budget " << (v.pass ? "PASS" : "FAIL") << " (limit below " << percent(v.limit) << ")\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear attention with trainable feedforward kernels", "ffattn"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "Config file (sections [model] [kernel] [task] "
                                            "[optimizer] [schedule] [train])");
  app.add_option("--seed", g.seed, "Seed (replaces train.seeds for train)");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--precision", g.precision, "Element type")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_flag("--override-budget", g.override_budget, "Train even when the kernel budget fails");

  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the eval split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* seeds_cmd = app.add_subcommand("seeds", "Train once per seed and summarize");
  std::vector<std::size_t> lengths;
  int samples = 7;
  auto* bench_cmd = app.add_subcommand("bench", "Attention scaling benchmark");
  bench_cmd->add_option("--lengths", lengths, "Sequence lengths (strictly increasing)")
      ->delimiter(',');
  bench_cmd->add_option("--samples", samples, "Timed samples per length")->capture_default_str();
  auto* verify_cmd = app.add_subcommand("verify", "Run the self-verification suite");
  auto* params_cmd = app.add_subcommand("params", "Print parameter accounting and budget verdict");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(g, out);
    if (*eval_cmd) return cmd_eval(g, checkpoint, out);
    if (*seeds_cmd) return cmd_seeds(g, out);
    if (*bench_cmd) return cmd_bench(g, lengths, samples, out);
    if (*verify_cmd) return cmd_verify(g, out);
    if (*params_cmd) return cmd_params(g, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ffattn
