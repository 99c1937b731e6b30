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

#ifndef FFATTN_ATTENTION_H_
#define FFATTN_ATTENTION_H_

// Attention evaluators over one sequence (non-causal).
//
// softmax_attention is the exact O(L^2) baseline. The two kernel evaluators
// compute the same quantity for positive features phi(q), phi(k):
//
//   out_i = sum_j m_j (phi(q_i) . phi(k_j)) v_j / sum_j m_j (phi(q_i) . phi(k_j))
//
// kernel_attention_quadratic materializes the L x L kernel matrix and is the
// reference. kernel_attention_linear reassociates the sums into
// S = sum_j m_j phi(k_j) v_j^T and z = sum_j m_j phi(k_j), which costs
// O(L * C * d) for C features and value width d.

#include <cstdint>
#include <string_view>
#include <vector>

#include "ffattn/kernels.h"
#include "ffattn/rng.h"
#include "ffattn/tensor.h"

namespace ffattn {

// Per-position validity of a padded sequence; true marks a real token.
class PadMask {
 public:
  // Throws ContractError unless at least one position is real.
  explicit PadMask(std::vector<bool> real);
  static PadMask all_real(std::size_t length);

  std::size_t size() const { return real_.size(); }
  bool operator[](std::size_t i) const { return real_[i]; }
  std::size_t real_count() const;
  // 1 for real positions, 0 for padding.
  template <typename T>
  std::vector<T> weights() const;

 private:
  std::vector<bool> real_;
};

enum class AttentionKind { kSoftmax, kKernelLinear, kKernelQuadratic };

std::string_view to_string(AttentionKind kind);
AttentionKind parse_attention_kind(std::string_view name);

// Q, K, V: [L x d]. Logits are scaled by 1/sqrt(d); padded keys receive -inf.
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            const PadMask& mask);

// Explicit O(L^2) kernel attention. Throws ContractError when a feature is
// not strictly positive.
template <typename T>
Tensor<T> kernel_attention_quadratic(const Tensor<T>& q_features, const Tensor<T>& k_features,
                                     const Tensor<T>& v, const PadMask& mask);

// Factorized kernel attention; eps is added to every denominator. Non-finite
// inputs propagate to the output rather than raising.
template <typename T>
Tensor<T> kernel_attention_linear(const Tensor<T>& q_features, const Tensor<T>& k_features,
                                  const Tensor<T>& v, const PadMask& mask, T eps);

// Multiply-adds spent accumulating S and z for one head: L*C*d + L*C.
std::uint64_t linear_attention_accumulation_ops(std::uint64_t length, std::uint64_t features,
                                                std::uint64_t value_dim);

template <typename T>
struct AttentionLayerParams {
  Tensor<T> w_q;
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
  // One feature map per head, applied to that head's queries.
  std::vector<KernelParams<T>> query_kernels;
  // Separate key feature maps; empty when queries and keys share weights.
  std::vector<KernelParams<T>> key_kernels;

  bool shared_qk() const { return key_kernels.empty(); }
  std::size_t kernel_param_count() const;
};

struct AttentionConfig {
  AttentionKind kind = AttentionKind::kKernelLinear;
  int d_model = 64;
  int n_heads = 4;
  KernelSpec kernel;
  bool share_qk = true;
  double eps = 1e-6;

  int head_dim() const { return n_heads > 0 ? d_model / n_heads : 0; }
  // Throws ConfigError naming the field.
  void validate() const;
};

// Projections are uniform in [-1/sqrt(d_model), 1/sqrt(d_model)]; kernel
// stacks follow init_kernel_params. Softmax layers carry no kernels.
template <typename T>
AttentionLayerParams<T> init_attention_params(const AttentionConfig& config, Rng& rng);

// Projects X [L x d_model] to Q, K, V, splits heads, evaluates each head with
// the configured evaluator (applying the head's feature map to its query and
// key slices for the kernel kinds), concatenates heads and applies W_o.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionLayerParams<T>& params,
                               const AttentionConfig& config, const PadMask& mask);

}  // namespace ffattn

#endif  // FFATTN_ATTENTION_H_
