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

#include "ffattn/model.h"

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <type_traits>

#include "ffattn/errors.h"
#include "ffattn/ops.h"

namespace ffattn {

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::kMean ? "mean" : "cls";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "cls") return Pooling::kCls;
  throw ConfigError("model.pooling: unknown pooling '" + std::string(name) +
                    "' (expected mean or cls)");
}

AttentionConfig ModelConfig::attention_config() const {
  AttentionConfig out;
  out.kind = attention;
  out.d_model = d_model;
  out.n_heads = n_heads;
  out.kernel = kernel;
  out.share_qk = share_qk;
  out.eps = eps;
  return out;
}

void ModelConfig::validate() const {
  auto positive = [](int value, const char* field) {
    if (value < 1) throw ConfigError(std::string(field) + ": must be at least 1");
  };
  positive(vocab_size, "model.vocab_size");
  positive(d_model, "model.d_model");
  positive(n_heads, "model.n_heads");
  positive(n_layers, "model.n_layers");
  positive(ffn_dim, "model.ffn_dim");
  positive(max_len, "model.max_len");
  positive(match_hidden, "model.match_hidden");
  if (vocab_size < 2) throw ConfigError("model.vocab_size: must be at least 2 (pad + one token)");
  if (num_classes < 2) throw ConfigError("model.num_classes: must be at least 2");
  if (task == TaskKind::kMatch && num_classes != 2) {
    throw ConfigError("model.num_classes: matching models have exactly 2 classes");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model.dropout: " + std::to_string(dropout) + " outside [0, 1)");
  }
  if (!(layer_norm_eps > 0.0)) throw ConfigError("model.layer_norm_eps: must be positive");
  attention_config().validate();
}

namespace {

template <typename T>
Tensor<T> as_param(const Tensor<T>& t) {
  return Tensor<T>::parameter(t.shape(), t.to_vector());
}

template <typename T>
Tensor<T> normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(stddev * rng.normal());
  return Tensor<T>::parameter(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> const_param(Shape shape, T value) {
  return Tensor<T>::parameter(shape, std::vector<T>(numel(shape), value));
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add(matmul(x, w), b);
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, double rate, const ForwardOptions& options) {
  if (!options.train || rate == 0.0) return x;
  if (options.rng == nullptr) throw ContractError("training forward pass requires an rng");
  return dropout(x, rate, *options.rng);
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto f = static_cast<std::size_t>(config_.ffn_dim);
  const auto positions =
      static_cast<std::size_t>(config_.max_len) + (config_.pooling == Pooling::kCls ? 1 : 0);
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));

  token_embedding_ = normal_param<T>({static_cast<std::size_t>(config_.vocab_size), d}, embed_std, rng);
  position_embedding_ = normal_param<T>({positions, d}, embed_std, rng);
  if (config_.pooling == Pooling::kCls) cls_embedding_ = normal_param<T>({1, d}, embed_std, rng);

  const AttentionConfig attn = config_.attention_config();
  for (int l = 0; l < config_.n_layers; ++l) {
    EncoderBlock<T> block;
    block.ln1_gain = const_param<T>({d}, T(1));
    block.ln1_bias = const_param<T>({d}, T(0));
    block.attention = init_attention_params<T>(attn, rng);
    block.ln2_gain = const_param<T>({d}, T(1));
    block.ln2_bias = const_param<T>({d}, T(0));
    block.ffn_w1 = as_param(uniform_init<T>(d, f, d, rng));
    block.ffn_b1 = const_param<T>({f}, T(0));
    block.ffn_w2 = as_param(uniform_init<T>(f, d, f, rng));
    block.ffn_b2 = const_param<T>({d}, T(0));
    blocks_.push_back(std::move(block));
  }
  final_gain_ = const_param<T>({d}, T(1));
  final_bias_ = const_param<T>({d}, T(0));

  if (config_.task == TaskKind::kClassify) {
    const auto c = static_cast<std::size_t>(config_.num_classes);
    head_w_ = as_param(uniform_init<T>(d, c, d, rng));
    head_b_ = const_param<T>({c}, T(0));
  } else {
    const auto hidden = static_cast<std::size_t>(config_.match_hidden);
    match_w1_ = as_param(uniform_init<T>(4 * d, hidden, 4 * d, rng));
    match_b1_ = const_param<T>({hidden}, T(0));
    match_w2_ = as_param(uniform_init<T>(hidden, 2, hidden, rng));
    match_b2_ = const_param<T>({2}, T(0));
  }
}

template <typename T>
template <typename Self, typename Fn>
void Model<T>::visit_impl(Self& self, const Fn& fn) {
  constexpr bool kMutable = !std::is_const_v<Self>;
  fn("embed.tokens", self.token_embedding_);
  fn("embed.positions", self.position_embedding_);
  if (self.config_.pooling == Pooling::kCls) fn("embed.cls", self.cls_embedding_);
  for (std::size_t l = 0; l < self.blocks_.size(); ++l) {
    auto& b = self.blocks_[l];
    const std::string p = "block" + std::to_string(l) + ".";
    fn(p + "ln1.gain", b.ln1_gain);
    fn(p + "ln1.bias", b.ln1_bias);
    fn(p + "attn.w_q", b.attention.w_q);
    fn(p + "attn.w_k", b.attention.w_k);
    fn(p + "attn.w_v", b.attention.w_v);
    fn(p + "attn.w_o", b.attention.w_o);
    auto visit_kernels = [&](auto& kernels, const std::string& tag) {
      for (std::size_t h = 0; h < kernels.size(); ++h) {
        auto tensors = kernels[h].tensors();
        const auto names = kernels[h].names();
        for (std::size_t i = 0; i < tensors.size(); ++i) {
          fn(p + "attn." + tag + std::to_string(h) + "." + names[i], tensors[i]);
        }
        if constexpr (kMutable) kernels[h].assign(tensors);
      }
    };
    visit_kernels(b.attention.query_kernels, b.attention.shared_qk() ? "phi" : "phi_q");
    visit_kernels(b.attention.key_kernels, "phi_k");
    fn(p + "ln2.gain", b.ln2_gain);
    fn(p + "ln2.bias", b.ln2_bias);
    fn(p + "ffn.w1", b.ffn_w1);
    fn(p + "ffn.b1", b.ffn_b1);
    fn(p + "ffn.w2", b.ffn_w2);
    fn(p + "ffn.b2", b.ffn_b2);
  }
  fn("final.gain", self.final_gain_);
  fn("final.bias", self.final_bias_);
  if (self.config_.task == TaskKind::kClassify) {
    fn("head.w", self.head_w_);
    fn("head.b", self.head_b_);
  } else {
    fn("match.w1", self.match_w1_);
    fn("match.b1", self.match_b1_);
    fn("match.w2", self.match_w2_);
    fn("match.b2", self.match_b2_);
  }
}

template <typename T>
void Model<T>::visit(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  visit_impl(*this, fn);
}

template <typename T>
void Model<T>::visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  visit_impl(*this, fn);
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() const {
  std::vector<Tensor<T>> out;
  visit([&out](const std::string&, const Tensor<T>& t) { out.push_back(t); });
  return out;
}

template <typename T>
std::vector<std::string> Model<T>::parameter_names() const {
  std::vector<std::string> out;
  visit([&out](const std::string& name, const Tensor<T>&) { out.push_back(name); });
  return out;
}

template <typename T>
void Model<T>::set_parameters(std::span<const Tensor<T>> values) {
  std::size_t k = 0;
  visit([&](const std::string& name, Tensor<T>& slot) {
    if (k >= values.size()) throw DimensionError("set_parameters: too few tensors");
    if (values[k].shape() != slot.shape()) {
      throw DimensionError("set_parameters: " + name + " expects " + shape_string(slot.shape()) +
                           ", got " + shape_string(values[k].shape()));
    }
    slot = values[k++];
  });
  if (k != values.size()) throw DimensionError("set_parameters: too many tensors");
}

template <typename T>
std::vector<Tensor<T>> Model<T>::kernel_parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& b : blocks_) {
    for (const auto& k : b.attention.query_kernels) {
      for (auto& t : k.tensors()) out.push_back(t);
    }
    for (const auto& k : b.attention.key_kernels) {
      for (auto& t : k.tensors()) out.push_back(t);
    }
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::encode(std::span<const std::int32_t> ids, const PadMask& mask,
                           const ForwardOptions& options) const {
  if (ids.size() != mask.size()) {
    throw DimensionError("encode: " + std::to_string(ids.size()) + " ids but mask length " +
                         std::to_string(mask.size()));
  }
  if (ids.size() > static_cast<std::size_t>(config_.max_len)) {
    throw DataError("encode: sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                    std::to_string(config_.max_len));
  }
  const bool cls = config_.pooling == Pooling::kCls;
  const std::size_t len = ids.size() + (cls ? 1 : 0);
  std::vector<std::int32_t> positions(len);
  std::iota(positions.begin(), positions.end(), 0);

  Tensor<T> tokens = gather_rows(token_embedding_, ids);
  std::vector<bool> real(len);
  if (cls) {
    const std::array<Tensor<T>, 2> parts{cls_embedding_, tokens};
    tokens = concat_rows<T>(parts);
    real[0] = true;
    for (std::size_t i = 0; i < ids.size(); ++i) real[i + 1] = mask[i];
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) real[i] = mask[i];
  }
  const PadMask seq_mask(std::move(real));
  Tensor<T> x = add(tokens, gather_rows(position_embedding_, positions));

  const AttentionConfig attn = config_.attention_config();
  const T ln_eps = static_cast<T>(config_.layer_norm_eps);
  for (const auto& b : blocks_) {
    const Tensor<T> a =
        multi_head_attention(layer_norm_rows(x, b.ln1_gain, b.ln1_bias, ln_eps), b.attention,
                             attn, seq_mask);
    x = add(x, maybe_dropout(a, config_.dropout, options));
    const Tensor<T> inner = gelu(linear(layer_norm_rows(x, b.ln2_gain, b.ln2_bias, ln_eps),
                                        b.ffn_w1, b.ffn_b1));
    x = add(x, linear(maybe_dropout(inner, config_.dropout, options), b.ffn_w2, b.ffn_b2));
  }
  const Tensor<T> h = layer_norm_rows(x, final_gain_, final_bias_, ln_eps);
  if (cls) {
    const std::array<std::int32_t, 1> first{0};
    return gather_rows(h, std::span<const std::int32_t>(first));
  }
  std::vector<T> weights = seq_mask.weights<T>();
  const T inv_count = T(1) / static_cast<T>(seq_mask.real_count());
  for (auto& w : weights) w *= inv_count;
  return matmul(Tensor<T>({1, len}, std::move(weights)), h);
}

template <typename T>
Tensor<T> Model<T>::orthogonality_penalty() const {
  return weighted_penalty(config_.kernel.ortho_reg_weight);
}

template <typename T>
Tensor<T> Model<T>::orthogonality_deviation() const {
  return weighted_penalty(1.0);
}

template <typename T>
Tensor<T> Model<T>::weighted_penalty(double lambda) const {
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (const auto& b : blocks_) {
    for (const auto& k : b.attention.query_kernels) {
      total = add(total, ffattn::orthogonality_penalty(k, lambda));
    }
    for (const auto& k : b.attention.key_kernels) {
      total = add(total, ffattn::orthogonality_penalty(k, lambda));
    }
  }
  return total;
}

namespace {

void require_kind(const ModelConfig& config, const Batch& batch, TaskKind want) {
  if (config.task != want || batch.kind != want) {
    throw ConfigError("model task '" + std::string(to_string(config.task)) +
                      "' does not match batch task '" + std::string(to_string(batch.kind)) + "'");
  }
}

}  // namespace

template <typename T>
Tensor<T> Model<T>::classify_head(const Tensor<T>& pooled) const {
  if (config_.task != TaskKind::kClassify) {
    throw ConfigError("classify_head called on a matching model");
  }
  return linear(pooled, head_w_, head_b_);
}

template <typename T>
Tensor<T> Model<T>::match_head(const Tensor<T>& u, const Tensor<T>& v) const {
  if (config_.task != TaskKind::kMatch) {
    throw ConfigError("match_head called on a classification model");
  }
  const std::array<Tensor<T>, 4> features{u, v, mul(u, v), abs(sub(u, v))};
  const Tensor<T> hidden = gelu(linear(concat_cols<T>(features), match_w1_, match_b1_));
  return linear(hidden, match_w2_, match_b2_);
}

template <typename T>
Tensor<T> forward_classify(const Model<T>& model, const Batch& batch,
                           const ForwardOptions& options) {
  require_kind(model.config(), batch, TaskKind::kClassify);
  std::vector<Tensor<T>> rows;
  rows.reserve(batch.first.batch);
  for (std::size_t i = 0; i < batch.first.batch; ++i) {
    rows.push_back(model.encode(batch.first.row(i), batch.first.row_mask(i), options));
  }
  return model.classify_head(concat_rows<T>(rows));
}

template <typename T>
Tensor<T> forward_match(const Model<T>& model, const Batch& batch,
                        const ForwardOptions& options) {
  require_kind(model.config(), batch, TaskKind::kMatch);
  if (!batch.second || batch.second->batch != batch.first.batch) {
    throw DataError("matching batch needs two sequence batches of equal size");
  }
  std::vector<Tensor<T>> us;
  std::vector<Tensor<T>> vs;
  for (std::size_t i = 0; i < batch.first.batch; ++i) {
    us.push_back(model.encode(batch.first.row(i), batch.first.row_mask(i), options));
    vs.push_back(model.encode(batch.second->row(i), batch.second->row_mask(i), options));
  }
  return model.match_head(concat_rows<T>(us), concat_rows<T>(vs));
}

template <typename T>
Tensor<T> forward_logits(const Model<T>& model, const Batch& batch,
                         const ForwardOptions& options) {
  return model.config().task == TaskKind::kClassify ? forward_classify(model, batch, options)
                                                    : forward_match(model, batch, options);
}

template <typename T>
LossTerms<T> model_loss(const Model<T>& model, const Batch& batch,
                        const ForwardOptions& options) {
  LossTerms<T> terms;
  terms.task = cross_entropy(forward_logits(model, batch, options), batch.labels);
  terms.penalty = model.orthogonality_penalty();
  terms.total = add(terms.task, terms.penalty);
  return terms;
}

template <typename T>
ParamAccount count_params(const Model<T>& model) {
  ParamAccount account;
  for (const auto& t : model.kernel_parameters()) account.kernel_params += t.numel();
  ModelConfig base = model.config();
  base.attention = AttentionKind::kSoftmax;
  const Model<float> reference(base, 0);
  for (const auto& t : reference.parameters()) account.base_params += t.numel();
  account.ratio = account.base_params == 0
                      ? 0.0
                      : static_cast<double>(account.kernel_params) /
                            static_cast<double>(account.base_params);
  return account;
}

ParamAccount count_params(const ModelConfig& config) {
  return count_params(Model<float>(config, 0));
}

BudgetVerdict budget_check(const ParamAccount& account, double limit) {
  BudgetVerdict verdict;
  verdict.ratio = account.ratio;
  verdict.limit = limit;
  verdict.pass = account.ratio < limit;
  return verdict;
}

#define FFATTN_INSTANTIATE_MODEL(T)                                                          \
  template class Model<T>;                                                                   \
  template Tensor<T> forward_classify(const Model<T>&, const Batch&, const ForwardOptions&); \
  template Tensor<T> forward_match(const Model<T>&, const Batch&, const ForwardOptions&);    \
  template Tensor<T> forward_logits(const Model<T>&, const Batch&, const ForwardOptions&);   \
  template LossTerms<T> model_loss(const Model<T>&, const Batch&, const ForwardOptions&);    \
  template ParamAccount count_params(const Model<T>&);

FFATTN_INSTANTIATE_MODEL(float)
FFATTN_INSTANTIATE_MODEL(double)

#undef FFATTN_INSTANTIATE_MODEL

}  // namespace ffattn
