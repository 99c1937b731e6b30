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

#include "ffattn/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ffattn {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

ConfigParseError::ConfigParseError(const std::string& source, std::size_t line,
                                   const std::string& message)
    : ConfigError(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

ConfigFile ConfigFile::parse(std::string_view text, std::string source) {
  ConfigFile file;
  file.source_ = std::move(source);
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigParseError(file.source_, line_no, "malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigParseError(file.source_, line_no, "expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigParseError(file.source_, line_no, "empty key");
    if (section.empty()) {
      throw ConfigParseError(file.source_, line_no,
                             "key '" + std::string(key) + "' outside of a [section]");
    }
    const std::string full = section + "." + std::string(key);
    if (file.entries_.count(full)) {
      throw ConfigParseError(file.source_, line_no, "duplicate key '" + full + "'");
    }
    file.entries_.emplace(full, Entry{std::string(value), line_no, false});
    if (end == text.size()) break;
  }
  return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const ConfigFile::Entry* ConfigFile::find(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

void ConfigFile::fail(const Entry& entry, std::string_view key, const std::string& what) const {
  throw ConfigParseError(source_, entry.line,
                         std::string(key) + ": " + what + " (got '" + entry.value + "')");
}

bool ConfigFile::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::size_t ConfigFile::line_of(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::string ConfigFile::get_string(std::string_view key, std::string fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

std::int64_t ConfigFile::get_int(std::string_view key, std::int64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), value);
  if (ec != std::errc() || ptr != e->value.data() + e->value.size()) fail(*e, key, "expected an integer");
  return value;
}

double ConfigFile::get_double(std::string_view key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), value);
  if (ec != std::errc() || ptr != e->value.data() + e->value.size()) fail(*e, key, "expected a number");
  return value;
}

bool ConfigFile::get_bool(std::string_view key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(*e, key, "expected true or false");
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(std::string_view key,
                                                    std::vector<std::uint64_t> fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<std::uint64_t> out;
  std::string_view rest = e->value;
  while (true) {
    const std::size_t comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      fail(*e, key, "expected a comma-separated list of non-negative integers");
    }
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void ConfigFile::reject_unused() const {
  const Entry* first = nullptr;
  std::string first_key;
  for (const auto& [key, entry] : entries_) {
    if (!entry.used && (first == nullptr || entry.line < first->line)) {
      first = &entry;
      first_key = key;
    }
  }
  if (first) throw ConfigParseError(source_, first->line, "unknown key '" + first_key + "'");
}

std::string_view to_string(Precision precision) {
  return precision == Precision::kF32 ? "f32" : "f64";
}

Precision parse_precision(std::string_view name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw ConfigError("precision: unknown value '" + std::string(name) + "' (expected f32 or f64)");
}

namespace {

// Applies a string-to-enum parser, attaching the line number on failure.
template <typename Parse>
auto get_enum(const ConfigFile& file, std::string_view key, std::string fallback, Parse parse) {
  const std::string value = file.get_string(key, std::move(fallback));
  try {
    return parse(value);
  } catch (const ConfigError& e) {
    const std::size_t line = file.line_of(key);
    if (line == 0) throw;
    throw ConfigParseError(file.source(), line, e.what());
  }
}

int get_int32(const ConfigFile& file, std::string_view key, int fallback) {
  const std::int64_t v = file.get_int(key, fallback);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw ConfigParseError(file.source(), file.line_of(key), std::string(key) + ": out of range");
  }
  return static_cast<int>(v);
}

std::size_t get_count(const ConfigFile& file, std::string_view key, std::size_t fallback) {
  const std::int64_t v = file.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) {
    throw ConfigParseError(file.source(), file.line_of(key), std::string(key) + ": must be non-negative");
  }
  return static_cast<std::size_t>(v);
}

TaskSource parse_task_source(std::string_view name) {
  if (name == "listops") return TaskSource::kListOps;
  if (name == "text") return TaskSource::kText;
  if (name == "match") return TaskSource::kMatch;
  if (name == "tsv") return TaskSource::kTsv;
  throw ConfigError("task.source: unknown source '" + std::string(name) +
                    "' (expected listops, text, match or tsv)");
}

DecayKind parse_decay(std::string_view name) {
  if (name == "linear") return DecayKind::kLinear;
  if (name == "inv_sqrt") return DecayKind::kInvSqrt;
  throw ConfigError("schedule.decay: unknown decay '" + std::string(name) +
                    "' (expected linear or inv_sqrt)");
}

}  // namespace

ModelConfig parse_model_config(const ConfigFile& file) {
  ModelConfig m;
  m.vocab_size = get_int32(file, "model.vocab_size", m.vocab_size);
  m.d_model = get_int32(file, "model.d_model", m.d_model);
  m.n_heads = get_int32(file, "model.n_heads", m.n_heads);
  m.n_layers = get_int32(file, "model.n_layers", m.n_layers);
  m.ffn_dim = get_int32(file, "model.ffn_dim", m.ffn_dim);
  m.max_len = get_int32(file, "model.max_len", m.max_len);
  m.num_classes = get_int32(file, "model.num_classes", m.num_classes);
  m.task = get_enum(file, "model.task", "classify", parse_task_kind);
  m.match_hidden = get_int32(file, "model.match_hidden", m.match_hidden);
  m.attention = get_enum(file, "model.attention", "kernel_linear", parse_attention_kind);
  m.share_qk = file.get_bool("model.share_qk", m.share_qk);
  m.eps = file.get_double("model.eps", m.eps);
  m.dropout = file.get_double("model.dropout", m.dropout);
  m.pooling = get_enum(file, "model.pooling", "mean", parse_pooling);
  m.layer_norm_eps = file.get_double("model.layer_norm_eps", m.layer_norm_eps);

  KernelSpec& k = m.kernel;
  k.variant = get_enum(file, "kernel.variant", "linear", parse_kernel_variant);
  k.depth = get_int32(file, "kernel.depth", k.depth);
  k.head_dim = get_int32(file, "kernel.head_dim", m.head_dim());
  k.gate_rank = get_int32(file, "kernel.gate_rank", k.gate_rank);
  k.orthogonal_init = file.get_bool("kernel.orthogonal_init", k.orthogonal_init);
  k.ortho_reg_weight = file.get_double("kernel.ortho_reg_weight", k.ortho_reg_weight);
  k.inner_nonlinearity = get_enum(file, "kernel.inner_nonlinearity", "gelu", parse_nonlinearity);
  k.lowrank_all_layers = file.get_bool("kernel.lowrank_all_layers", k.lowrank_all_layers);
  return m;
}

TrainConfig parse_train_config(const ConfigFile& file) {
  TrainConfig c;
  c.model = parse_model_config(file);

  TaskConfig& t = c.task;
  t.source = get_enum(file, "task.source", "text", parse_task_source);
  t.seed = static_cast<std::uint64_t>(file.get_int("task.seed", static_cast<std::int64_t>(t.seed)));
  t.train_count = get_count(file, "task.train_count", t.train_count);
  t.eval_count = get_count(file, "task.eval_count", t.eval_count);
  t.len = get_count(file, "task.len", t.len);
  t.vocab_size = get_int32(file, "task.vocab_size", t.vocab_size);
  t.classes = get_int32(file, "task.classes", t.classes);
  t.max_depth = get_int32(file, "task.max_depth", t.max_depth);
  t.train_path = file.get_string("task.train_path", t.train_path);
  t.eval_path = file.get_string("task.eval_path", t.eval_path);
  t.schema = get_enum(file, "task.schema", "classify", parse_task_kind);

  OptimizerConfig& o = c.optimizer;
  o.lr = file.get_double("optimizer.lr", o.lr);
  o.beta1 = file.get_double("optimizer.beta1", o.beta1);
  o.beta2 = file.get_double("optimizer.beta2", o.beta2);
  o.eps = file.get_double("optimizer.eps", o.eps);
  o.weight_decay = file.get_double("optimizer.weight_decay", o.weight_decay);

  ScheduleConfig& s = c.schedule;
  s.warmup_steps = get_int32(file, "schedule.warmup_steps", s.warmup_steps);
  s.total_steps = get_int32(file, "schedule.total_steps", s.total_steps);
  s.decay = get_enum(file, "schedule.decay", "linear", parse_decay);

  c.micro_batch = get_int32(file, "train.micro_batch", c.micro_batch);
  c.accumulation_steps = get_int32(file, "train.accumulation_steps", c.accumulation_steps);
  c.seeds = file.get_u64_list("train.seeds", c.seeds);
  c.eval_every = get_int32(file, "train.eval_every", c.eval_every);
  c.budget_limit = file.get_double("train.budget_limit", c.budget_limit);
  if (file.has("train.target_accuracy")) {
    c.target_accuracy = file.get_double("train.target_accuracy", 0.0);
  }
  c.precision = get_enum(file, "train.precision", "f32", parse_precision);
  c.record_wall_time = file.get_bool("train.record_wall_time", c.record_wall_time);

  file.reject_unused();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig config = parse_train_config(ConfigFile::load(path));
  config.validate();
  return config;
}

void TrainConfig::validate() const {
  if (schedule.warmup_steps < 0) throw ConfigError("schedule.warmup_steps: must be non-negative");
  if (schedule.total_steps <= schedule.warmup_steps) {
    throw ConfigError("schedule.total_steps: must exceed warmup_steps");
  }
  if (accumulation_steps < 1) throw ConfigError("train.accumulation_steps: must be at least 1");
  if (micro_batch < 1) throw ConfigError("train.micro_batch: must be at least 1");
  if (seeds.empty()) throw ConfigError("train.seeds: at least one seed required");
  if (eval_every < 1) throw ConfigError("train.eval_every: must be at least 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr: must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) {
    throw ConfigError("optimizer.beta1: must lie in [0, 1)");
  }
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer.beta2: must lie in [0, 1)");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("optimizer.eps: must be positive");
  if (!(optimizer.weight_decay >= 0.0)) {
    throw ConfigError("optimizer.weight_decay: must be non-negative");
  }
  if (!(budget_limit > 0.0)) throw ConfigError("train.budget_limit: must be positive");
  if (task.source == TaskSource::kTsv && task.train_path.empty()) {
    throw ConfigError("task.train_path: required when task.source = tsv");
  }
  if (task.source == TaskSource::kTsv && task.eval_path.empty()) {
    throw ConfigError("task.eval_path: required when task.source = tsv");
  }
}

std::string to_config_text(const ModelConfig& m) {
  std::ostringstream os;
  os << "[model]\n"
     << "vocab_size = " << m.vocab_size << '\n'
     << "d_model = " << m.d_model << '\n'
     << "n_heads = " << m.n_heads << '\n'
     << "n_layers = " << m.n_layers << '\n'
     << "ffn_dim = " << m.ffn_dim << '\n'
     << "max_len = " << m.max_len << '\n'
     << "num_classes = " << m.num_classes << '\n'
     << "task = " << to_string(m.task) << '\n'
     << "match_hidden = " << m.match_hidden << '\n'
     << "attention = " << to_string(m.attention) << '\n'
     << "share_qk = " << (m.share_qk ? "true" : "false") << '\n'
     << "eps = " << format_double(m.eps) << '\n'
     << "dropout = " << format_double(m.dropout) << '\n'
     << "pooling = " << to_string(m.pooling) << '\n'
     << "layer_norm_eps = " << format_double(m.layer_norm_eps) << '\n'
     << "\n[kernel]\n"
     << "variant = " << to_string(m.kernel.variant) << '\n'
     << "depth = " << m.kernel.depth << '\n'
     << "head_dim = " << m.kernel.head_dim << '\n'
     << "gate_rank = " << m.kernel.gate_rank << '\n'
     << "orthogonal_init = " << (m.kernel.orthogonal_init ? "true" : "false") << '\n'
     << "ortho_reg_weight = " << format_double(m.kernel.ortho_reg_weight) << '\n'
     << "inner_nonlinearity = " << to_string(m.kernel.inner_nonlinearity) << '\n'
     << "lowrank_all_layers = " << (m.kernel.lowrank_all_layers ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace ffattn
