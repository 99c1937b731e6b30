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

#include "ffattn/attention.h"

#include <cmath>
#include <limits>
#include <string>

#include "ffattn/errors.h"
#include "ffattn/ops.h"

namespace ffattn {

PadMask::PadMask(std::vector<bool> real) : real_(std::move(real)) {
  if (real_count() == 0) {
    throw ContractError("pad mask of length " + std::to_string(real_.size()) +
                        " has no real positions");
  }
}

PadMask PadMask::all_real(std::size_t length) { return PadMask(std::vector<bool>(length, true)); }

std::size_t PadMask::real_count() const {
  std::size_t n = 0;
  for (bool b : real_) n += b ? 1 : 0;
  return n;
}

template <typename T>
std::vector<T> PadMask::weights() const {
  std::vector<T> w(real_.size());
  for (std::size_t i = 0; i < real_.size(); ++i) w[i] = real_[i] ? T(1) : T(0);
  return w;
}

template std::vector<float> PadMask::weights<float>() const;
template std::vector<double> PadMask::weights<double>() const;

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kSoftmax:
      return "softmax";
    case AttentionKind::kKernelLinear:
      return "kernel_linear";
    case AttentionKind::kKernelQuadratic:
      return "kernel_quadratic";
  }
  return "unknown";
}

AttentionKind parse_attention_kind(std::string_view name) {
  if (name == "softmax") return AttentionKind::kSoftmax;
  if (name == "kernel_linear") return AttentionKind::kKernelLinear;
  if (name == "kernel_quadratic") return AttentionKind::kKernelQuadratic;
  throw ConfigError("model.attention: unknown kind '" + std::string(name) +
                    "' (expected softmax, kernel_linear or kernel_quadratic)");
}

namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const PadMask& mask,
               const char* what) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows() || q.rows() != k.rows() || mask.size() != k.rows()) {
    throw DimensionError(std::string(what) + ": incompatible shapes Q " +
                         shape_string(q.shape()) + ", K " + shape_string(k.shape()) + ", V " +
                         shape_string(v.shape()) + ", mask length " +
                         std::to_string(mask.size()));
  }
}

template <typename T>
void require_positive(const Tensor<T>& features, const char* what) {
  for (T f : features.data()) {
    if (!(f > T(0))) {
      throw ContractError(std::string(what) +
                          ": kernel features must be strictly positive (broken feature map)");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            const PadMask& mask) {
  check_qkv(q, k, v, mask, "softmax_attention");
  if (mask.real_count() == 0) throw ContractError("softmax_attention: every key is masked");
  const std::size_t len = k.rows();
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(q.cols()));
  std::vector<T> bias(len);
  for (std::size_t j = 0; j < len; ++j) {
    bias[j] = mask[j] ? T(0) : -std::numeric_limits<T>::infinity();
  }
  const Tensor<T> logits = scale(matmul(q, transpose(k)), inv_sqrt_d);
  const Tensor<T> weights = softmax_rows(add(logits, Tensor<T>({len}, std::move(bias))));
  return matmul(weights, v);
}

template <typename T>
Tensor<T> kernel_attention_quadratic(const Tensor<T>& q_features, const Tensor<T>& k_features,
                                     const Tensor<T>& v, const PadMask& mask) {
  check_qkv(q_features, k_features, v, mask, "kernel_attention_quadratic");
  require_positive(q_features, "kernel_attention_quadratic");
  require_positive(k_features, "kernel_attention_quadratic");
  const std::vector<T> m = mask.weights<T>();
  const Tensor<T> kappa = scale_cols(matmul(q_features, transpose(k_features)), std::span<const T>(m));
  return div_rows(matmul(kappa, v), row_sum(kappa));
}

template <typename T>
Tensor<T> kernel_attention_linear(const Tensor<T>& q_features, const Tensor<T>& k_features,
                                  const Tensor<T>& v, const PadMask& mask, T eps) {
  check_qkv(q_features, k_features, v, mask, "kernel_attention_linear");
  if (eps < T(0)) throw ContractError("kernel_attention_linear: eps must be non-negative");
  const std::vector<T> m = mask.weights<T>();
  const Tensor<T> keys_t = transpose(scale_rows(k_features, std::span<const T>(m)));
  const Tensor<T> s = matmul(keys_t, v);  // C x d
  const Tensor<T> z = row_sum(keys_t);    // C x 1
  const Tensor<T> numer = matmul(q_features, s);
  Tensor<T> denom = matmul(q_features, z);
  if (eps > T(0)) denom = add_scalar(denom, eps);
  return div_rows(numer, denom);
}

std::uint64_t linear_attention_accumulation_ops(std::uint64_t length, std::uint64_t features,
                                                std::uint64_t value_dim) {
  return length * features * value_dim + length * features;
}

template <typename T>
std::size_t AttentionLayerParams<T>::kernel_param_count() const {
  std::size_t total = 0;
  for (const auto& k : query_kernels) total += k.count();
  for (const auto& k : key_kernels) total += k.count();
  return total;
}

void AttentionConfig::validate() const {
  if (d_model < 1) throw ConfigError("model.d_model: must be positive");
  if (n_heads < 1) throw ConfigError("model.n_heads: must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("model.d_model: " + std::to_string(d_model) + " is not n_heads (" +
                      std::to_string(n_heads) + ") times head_dim");
  }
  if (!(eps >= 0.0)) throw ConfigError("model.eps: must be non-negative");
  if (kind != AttentionKind::kSoftmax) {
    if (kernel.head_dim != head_dim()) {
      throw ConfigError("kernel.head_dim: " + std::to_string(kernel.head_dim) +
                        " differs from d_model / n_heads = " + std::to_string(head_dim()));
    }
    kernel.validate();
  }
}

template <typename T>
AttentionLayerParams<T> init_attention_params(const AttentionConfig& config, Rng& rng) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  auto projection = [&] {
    const Tensor<T> t = uniform_init<T>(d, d, d, rng);
    return Tensor<T>::parameter(t.shape(), t.to_vector());
  };
  AttentionLayerParams<T> params;
  params.w_q = projection();
  params.w_k = projection();
  params.w_v = projection();
  params.w_o = projection();
  if (config.kind != AttentionKind::kSoftmax) {
    for (int h = 0; h < config.n_heads; ++h) {
      params.query_kernels.push_back(init_kernel_params<T>(config.kernel, rng));
    }
    if (!config.share_qk) {
      for (int h = 0; h < config.n_heads; ++h) {
        params.key_kernels.push_back(init_kernel_params<T>(config.kernel, rng));
      }
    }
  }
  return params;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionLayerParams<T>& params,
                               const AttentionConfig& config, const PadMask& mask) {
  if (x.rank() != 2 || x.cols() != static_cast<std::size_t>(config.d_model)) {
    throw DimensionError("multi_head_attention: input " + shape_string(x.shape()) +
                         " does not have d_model = " + std::to_string(config.d_model) +
                         " columns");
  }
  const bool kernel = config.kind != AttentionKind::kSoftmax;
  const auto heads = static_cast<std::size_t>(config.n_heads);
  if (kernel && (params.query_kernels.size() != heads ||
                 (!params.key_kernels.empty() && params.key_kernels.size() != heads))) {
    throw DimensionError("multi_head_attention: expected one kernel per head (" +
                         std::to_string(heads) + ")");
  }
  const std::size_t n = static_cast<std::size_t>(config.head_dim());
  const Tensor<T> q = matmul(x, params.w_q);
  const Tensor<T> k = matmul(x, params.w_k);
  const Tensor<T> v = matmul(x, params.w_v);
  const T eps = static_cast<T>(config.eps);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T> qh = slice_cols(q, h * n, n);
    const Tensor<T> kh = slice_cols(k, h * n, n);
    const Tensor<T> vh = slice_cols(v, h * n, n);
    if (!kernel) {
      outputs.push_back(softmax_attention(qh, kh, vh, mask));
      continue;
    }
    const auto& q_map = params.query_kernels[h];
    const auto& k_map = params.shared_qk() ? q_map : params.key_kernels[h];
    const Tensor<T> qf = kernel_stack_forward(qh, config.kernel, q_map);
    const Tensor<T> kf = kernel_stack_forward(kh, config.kernel, k_map);
    if (config.kind == AttentionKind::kKernelQuadratic) {
      outputs.push_back(kernel_attention_quadratic(qf, kf, vh, mask));
    } else {
      outputs.push_back(kernel_attention_linear(qf, kf, vh, mask, eps));
    }
  }
  const Tensor<T> merged = heads == 1 ? outputs[0] : concat_cols<T>(outputs);
  return matmul(merged, params.w_o);
}

#define FFATTN_INSTANTIATE_ATTENTION(T)                                                     \
  template Tensor<T> softmax_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       const PadMask&);                                     \
  template Tensor<T> kernel_attention_quadratic(const Tensor<T>&, const Tensor<T>&,         \
                                                const Tensor<T>&, const PadMask&);          \
  template Tensor<T> kernel_attention_linear(const Tensor<T>&, const Tensor<T>&,            \
                                             const Tensor<T>&, const PadMask&, T);          \
  template struct AttentionLayerParams<T>;                                                  \
  template AttentionLayerParams<T> init_attention_params<T>(const AttentionConfig&, Rng&);  \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const AttentionLayerParams<T>&,  \
                                          const AttentionConfig&, const PadMask&);

FFATTN_INSTANTIATE_ATTENTION(float)
FFATTN_INSTANTIATE_ATTENTION(double)

#undef FFATTN_INSTANTIATE_ATTENTION

}  // namespace ffattn
