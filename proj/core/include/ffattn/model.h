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

#ifndef FFATTN_MODEL_H_
#define FFATTN_MODEL_H_

// Pre-norm transformer encoder over the attention evaluators, with a
// classification head and a dual-encoder matching head.
//
//   x = E[tokens] + P[positions]
//   repeat n_layers:  x += dropout(attn(LN(x)));  x += W2 dropout(gelu(W1 LN(x) + b1)) + b2
//   h = LN(x), pooled over real positions (mean) or taken at a learned CLS slot
//   classify: logits = h W + b
//   match:    logits = W2' gelu([u, v, u*v, |u - v|] W1' + b1') + b2'

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffattn/attention.h"
#include "ffattn/data.h"
#include "ffattn/kernels.h"
#include "ffattn/rng.h"
#include "ffattn/tensor.h"

namespace ffattn {

enum class Pooling { kMean, kCls };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

struct ModelConfig {
  int vocab_size = 64;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int ffn_dim = 128;
  int max_len = 128;
  int num_classes = 2;
  TaskKind task = TaskKind::kClassify;
  // Hidden width of the matching classifier.
  int match_hidden = 64;
  AttentionKind attention = AttentionKind::kKernelLinear;
  KernelSpec kernel;
  bool share_qk = true;
  double eps = 1e-6;
  double dropout = 0.1;
  Pooling pooling = Pooling::kMean;
  double layer_norm_eps = 1e-5;

  int head_dim() const { return n_heads > 0 ? d_model / n_heads : 0; }
  AttentionConfig attention_config() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct ForwardOptions {
  // Enables dropout; requires rng.
  bool train = false;
  Rng* rng = nullptr;
};

template <typename T>
struct EncoderBlock {
  Tensor<T> ln1_gain, ln1_bias;
  AttentionLayerParams<T> attention;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
class Model {
 public:
  // Deterministic initialization from seed. Kernel matrices follow the
  // kernel spec (orthogonal where requested).
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // All trainable tensors in a fixed order, with dotted names.
  std::vector<Tensor<T>> parameters() const;
  std::vector<std::string> parameter_names() const;
  // Replaces parameters (same order and shapes as parameters()).
  void set_parameters(std::span<const Tensor<T>> values);
  // Feature-map matrices only.
  std::vector<Tensor<T>> kernel_parameters() const;

  // Encodes one sequence into a [1 x d_model] vector.
  Tensor<T> encode(std::span<const std::int32_t> ids, const PadMask& mask,
                   const ForwardOptions& options = {}) const;

  // Classification head over pooled rows [B x d_model].
  Tensor<T> classify_head(const Tensor<T>& pooled) const;
  // Matching head over encoded pairs u, v [B x d_model].
  Tensor<T> match_head(const Tensor<T>& u, const Tensor<T>& v) const;

  // Sum over layers and heads of the kernel orthogonality penalty with the
  // configured lambda.
  Tensor<T> orthogonality_penalty() const;
  // The same sum with lambda = 1: total squared distance of the regularized
  // matrices from orthogonality.
  Tensor<T> orthogonality_deviation() const;

  const std::vector<EncoderBlock<T>>& blocks() const { return blocks_; }

 private:
  // Calls fn(name, tensor) for every parameter in the canonical order. The
  // mutable overload writes modified kernel tensors back into their stacks.
  void visit(const std::function<void(const std::string&, Tensor<T>&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;
  Tensor<T> weighted_penalty(double lambda) const;

  template <typename Self, typename Fn>
  static void visit_impl(Self& self, const Fn& fn);

  ModelConfig config_;
  Tensor<T> token_embedding_;
  Tensor<T> position_embedding_;
  Tensor<T> cls_embedding_;  // used with Pooling::kCls only
  std::vector<EncoderBlock<T>> blocks_;
  Tensor<T> final_gain_, final_bias_;
  Tensor<T> head_w_, head_b_;              // classification
  Tensor<T> match_w1_, match_b1_, match_w2_, match_b2_;  // matching
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<T>(config, seed);
}

// [B x num_classes] logits; the batch must be a classification batch.
template <typename T>
Tensor<T> forward_classify(const Model<T>& model, const Batch& batch,
                           const ForwardOptions& options = {});

// [B x 2] logits from independently encoded pairs.
template <typename T>
Tensor<T> forward_match(const Model<T>& model, const Batch& batch,
                        const ForwardOptions& options = {});

// Dispatches on the model's task.
template <typename T>
Tensor<T> forward_logits(const Model<T>& model, const Batch& batch,
                         const ForwardOptions& options = {});

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> task;
  Tensor<T> penalty;
};

// Mean cross-entropy over the batch plus the orthogonality penalty.
template <typename T>
LossTerms<T> model_loss(const Model<T>& model, const Batch& batch,
                        const ForwardOptions& options = {});

struct ParamAccount {
  std::uint64_t base_params = 0;
  std::uint64_t kernel_params = 0;
  double ratio = 0.0;
};

// kernel_params counts every feature-map matrix; base_params is the
// parameter count of the same configuration built with softmax attention.
template <typename T>
ParamAccount count_params(const Model<T>& model);
ParamAccount count_params(const ModelConfig& config);

struct BudgetVerdict {
  bool pass = true;
  double ratio = 0.0;
  double limit = 0.10;
};

// Passes iff ratio < limit.
BudgetVerdict budget_check(const ParamAccount& account, double limit = 0.10);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ffattn

#endif  // FFATTN_MODEL_H_
