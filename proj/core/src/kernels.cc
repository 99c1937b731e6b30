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

#include "ffattn/kernels.h"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ffattn/errors.h"
#include "ffattn/ops.h"

namespace ffattn {

std::string_view to_string(KernelVariant variant) {
  switch (variant) {
    case KernelVariant::kLinearSoftplus:
      return "linear";
    case KernelVariant::kGlu:
      return "glu";
    case KernelVariant::kOglu:
      return "oglu";
    case KernelVariant::kAoglu:
      return "aoglu";
  }
  return "unknown";
}

std::string_view to_string(Nonlinearity nonlinearity) {
  switch (nonlinearity) {
    case Nonlinearity::kSoftplus:
      return "softplus";
    case Nonlinearity::kGelu:
      return "gelu";
    case Nonlinearity::kSigmoid:
      return "sigmoid";
  }
  return "unknown";
}

KernelVariant parse_kernel_variant(std::string_view name) {
  if (name == "linear" || name == "linear_softplus") return KernelVariant::kLinearSoftplus;
  if (name == "glu") return KernelVariant::kGlu;
  if (name == "oglu") return KernelVariant::kOglu;
  if (name == "aoglu") return KernelVariant::kAoglu;
  throw ConfigError("kernel.variant: unknown variant '" + std::string(name) +
                    "' (expected linear, glu, oglu or aoglu)");
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "softplus") return Nonlinearity::kSoftplus;
  if (name == "gelu") return Nonlinearity::kGelu;
  if (name == "sigmoid") return Nonlinearity::kSigmoid;
  throw ConfigError("kernel.inner_nonlinearity: unknown nonlinearity '" + std::string(name) +
                    "' (expected softplus, gelu or sigmoid)");
}

bool KernelSpec::orthogonal() const {
  return variant != KernelVariant::kGlu && orthogonal_init;
}

int KernelSpec::effective_gate_rank() const {
  return gate_rank > 0 ? gate_rank : head_dim / 4;
}

bool KernelSpec::layer_low_rank(int index) const {
  if (variant != KernelVariant::kAoglu) return false;
  return lowrank_all_layers || index == depth - 1;
}

void KernelSpec::validate() const {
  if (depth < 1 || depth > 3) {
    throw ConfigError("kernel.depth: " + std::to_string(depth) + " outside [1, 3]");
  }
  if (head_dim < 2) {
    throw ConfigError("kernel.head_dim: " + std::to_string(head_dim) + " must be at least 2");
  }
  if (!(ortho_reg_weight >= 0.0)) {
    throw ConfigError("kernel.ortho_reg_weight: must be non-negative");
  }
  if (variant == KernelVariant::kAoglu) {
    const int r = effective_gate_rank();
    if (r < 1 || 2 * r >= head_dim) {
      throw ConfigError("kernel.gate_rank: rank " + std::to_string(r) +
                        " violates 1 <= r < n/2 for head_dim " + std::to_string(head_dim));
    }
  }
}

template <typename T>
std::vector<Tensor<T>> KernelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (const auto& layer : layers) {
    out.push_back(layer.w);
    if (layer.w_gate) out.push_back(*layer.w_gate);
    if (layer.u_gate) out.push_back(*layer.u_gate);
    if (layer.v_gate) out.push_back(*layer.v_gate);
  }
  return out;
}

template <typename T>
std::vector<std::string> KernelParams<T>::names() const {
  std::vector<std::string> out;
  const bool gated = variant != KernelVariant::kLinearSoftplus;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "l" + std::to_string(i) + ".";
    out.push_back(prefix + (gated ? "w_f" : "w"));
    if (layers[i].w_gate) out.push_back(prefix + "w_g");
    if (layers[i].u_gate) out.push_back(prefix + "u_g");
    if (layers[i].v_gate) out.push_back(prefix + "v_g");
  }
  return out;
}

template <typename T>
void KernelParams<T>::assign(std::span<const Tensor<T>> values) {
  std::size_t k = 0;
  auto take = [&](Tensor<T>& slot) {
    if (k >= values.size()) throw DimensionError("KernelParams::assign: too few tensors");
    if (values[k].shape() != slot.shape()) {
      throw DimensionError("KernelParams::assign: shape " + shape_string(values[k].shape()) +
                           " does not match " + shape_string(slot.shape()));
    }
    slot = values[k++];
  };
  for (auto& layer : layers) {
    take(layer.w);
    if (layer.w_gate) take(*layer.w_gate);
    if (layer.u_gate) take(*layer.u_gate);
    if (layer.v_gate) take(*layer.v_gate);
  }
  if (k != values.size()) throw DimensionError("KernelParams::assign: too many tensors");
}

template <typename T>
std::size_t KernelParams<T>::count() const {
  std::size_t total = 0;
  for (const auto& t : tensors()) total += t.numel();
  return total;
}

std::size_t kernel_param_count(const KernelSpec& spec) {
  const auto n = static_cast<std::size_t>(spec.head_dim);
  const auto r = static_cast<std::size_t>(spec.effective_gate_rank());
  std::size_t total = 0;
  for (int i = 0; i < spec.depth; ++i) {
    if (!spec.gated()) {
      total += n * n;
    } else if (spec.layer_low_rank(i)) {
      total += n * n + 2 * n * r;
    } else {
      total += 2 * n * n;
    }
  }
  return total;
}

template <typename T>
Tensor<T> orthogonal_init(std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("orthogonal_init: n must be at least 1");
  Eigen::MatrixXd draw(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) draw(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(draw);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (std::size_t j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  std::vector<T> data(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) data[i * n + j] = static_cast<T>(q(i, j));
  return Tensor<T>({n, n}, std::move(data));
}

template <typename T>
Tensor<T> orthogonal_init(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return orthogonal_init<T>(n, rng);
}

template <typename T>
Tensor<T> uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> data(rows * cols);
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>({rows, cols}, std::move(data));
}

template <typename T>
KernelParams<T> init_kernel_params(const KernelSpec& spec, Rng& rng) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.head_dim);
  const auto r = static_cast<std::size_t>(spec.effective_gate_rank());
  auto param = [](const Tensor<T>& t) { return Tensor<T>::parameter(t.shape(), t.to_vector()); };
  KernelParams<T> params;
  params.variant = spec.variant;
  for (int i = 0; i < spec.depth; ++i) {
    KernelLayer<T> layer;
    layer.w = param(spec.orthogonal() ? orthogonal_init<T>(n, rng) : uniform_init<T>(n, n, n, rng));
    if (spec.gated()) {
      if (spec.layer_low_rank(i)) {
        layer.u_gate = param(uniform_init<T>(n, r, n, rng));
        layer.v_gate = param(uniform_init<T>(r, n, n, rng));
      } else {
        layer.w_gate = param(uniform_init<T>(n, n, n, rng));
      }
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

template <typename T>
void require_square(const Tensor<T>& w, std::size_t n, const char* what) {
  if (w.rank() != 2 || w.rows() != n || w.cols() != n) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(n) + "x" +
                         std::to_string(n) + "], got " + shape_string(w.shape()));
  }
}

template <typename T>
std::size_t feature_dim(const Tensor<T>& x, const char* what) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(what) + ": input must be [L x n], got " +
                         shape_string(x.shape()));
  }
  return x.cols();
}

template <typename T>
Tensor<T> apply_nonlinearity(const Tensor<T>& z, Nonlinearity kind) {
  switch (kind) {
    case Nonlinearity::kSoftplus:
      return softplus(z);
    case Nonlinearity::kGelu:
      return gelu(z);
    case Nonlinearity::kSigmoid:
      return sigmoid(z);
  }
  return z;
}

template <typename T>
void check_params(const KernelSpec& spec, const KernelParams<T>& params) {
  if (params.variant != spec.variant ||
      params.layers.size() != static_cast<std::size_t>(spec.depth)) {
    throw ContractError("kernel params (" + std::string(to_string(params.variant)) + ", depth " +
                        std::to_string(params.layers.size()) + ") do not match spec (" +
                        std::string(to_string(spec.variant)) + ", depth " +
                        std::to_string(spec.depth) + ")");
  }
  for (int i = 0; i < spec.depth; ++i) {
    const auto& layer = params.layers[static_cast<std::size_t>(i)];
    const bool want_full = spec.gated() && !spec.layer_low_rank(i);
    const bool want_low = spec.layer_low_rank(i);
    if (layer.w_gate.has_value() != want_full || layer.u_gate.has_value() != want_low ||
        layer.v_gate.has_value() != want_low) {
      throw ContractError("kernel params layer " + std::to_string(i) +
                          " has the wrong gate structure for the spec");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> linear_kernel_forward(const Tensor<T>& x, const Tensor<T>& w) {
  require_square(w, feature_dim(x, "linear_kernel_forward"), "linear_kernel_forward W");
  return softplus(matmul(x, w));
}

template <typename T>
Tensor<T> glu_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& w_g) {
  const std::size_t n = feature_dim(x, "glu_forward");
  require_square(w_f, n, "glu_forward W_f");
  require_square(w_g, n, "glu_forward W_g");
  return mul(matmul(x, w_f), sigmoid(matmul(x, w_g)));
}

template <typename T>
Tensor<T> oglu_output_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& w_g) {
  const std::size_t n = feature_dim(x, "oglu_output_forward");
  require_square(w_f, n, "oglu_output_forward W_f");
  require_square(w_g, n, "oglu_output_forward W_g");
  return mul(softplus(matmul(x, w_f)), sigmoid(matmul(x, w_g)));
}

namespace {

template <typename T>
Tensor<T> low_rank_gate(const Tensor<T>& x, const Tensor<T>& u_g, const Tensor<T>& v_g,
                        const char* what) {
  const std::size_t n = x.cols();
  if (u_g.rank() != 2 || v_g.rank() != 2 || u_g.rows() != n || v_g.cols() != n ||
      u_g.cols() != v_g.rows()) {
    throw DimensionError(std::string(what) + ": gate factors " + shape_string(u_g.shape()) +
                         " and " + shape_string(v_g.shape()) + " do not fit head_dim " +
                         std::to_string(n));
  }
  const std::size_t r = u_g.cols();
  if (r < 1 || 2 * r >= n) {
    throw ConfigError(std::string(what) + ": gate rank " + std::to_string(r) +
                      " violates 1 <= r < n/2 for n = " + std::to_string(n));
  }
  return matmul(matmul(x, u_g), v_g);
}

}  // namespace

template <typename T>
Tensor<T> aoglu_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& u_g,
                        const Tensor<T>& v_g) {
  const std::size_t n = feature_dim(x, "aoglu_forward");
  require_square(w_f, n, "aoglu_forward W_f");
  return mul(softplus(matmul(x, w_f)), sigmoid(low_rank_gate(x, u_g, v_g, "aoglu_forward")));
}

template <typename T>
Tensor<T> kernel_stack_forward(const Tensor<T>& x, const KernelSpec& spec,
                               const KernelParams<T>& params) {
  check_params(spec, params);
  Tensor<T> h = x;
  for (int i = 0; i < spec.depth; ++i) {
    const auto& layer = params.layers[static_cast<std::size_t>(i)];
    const bool last = i == spec.depth - 1;
    if (!spec.gated()) {
      h = last ? linear_kernel_forward(h, layer.w)
               : apply_nonlinearity(matmul(h, layer.w), spec.inner_nonlinearity);
    } else if (layer.low_rank()) {
      h = last ? aoglu_forward(h, layer.w, *layer.u_gate, *layer.v_gate)
               : mul(matmul(h, layer.w),
                     sigmoid(low_rank_gate(h, *layer.u_gate, *layer.v_gate, "glu (low-rank)")));
    } else {
      h = last ? oglu_output_forward(h, layer.w, *layer.w_gate)
               : glu_forward(h, layer.w, *layer.w_gate);
    }
  }
  return h;
}

template <typename T>
Tensor<T> orthogonality_penalty(const KernelParams<T>& params, double lambda) {
  if (params.variant == KernelVariant::kGlu || lambda == 0.0 || params.layers.empty()) {
    return Tensor<T>::scalar(T(0));
  }
  std::vector<Tensor<T>> terms;
  for (const auto& layer : params.layers) {
    const Tensor<T>& w = layer.w;
    const Tensor<T> gram = matmul(transpose(w), w);
    terms.push_back(sum(square(sub(gram, Tensor<T>::identity(w.cols())))));
  }
  Tensor<T> total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, static_cast<T>(lambda));
}

#define FFATTN_INSTANTIATE_KERNELS(T)                                                          \
  template struct KernelParams<T>;                                                             \
  template Tensor<T> orthogonal_init<T>(std::size_t, Rng&);                                    \
  template Tensor<T> orthogonal_init<T>(std::size_t, std::uint64_t);                           \
  template Tensor<T> uniform_init<T>(std::size_t, std::size_t, std::size_t, Rng&);             \
  template KernelParams<T> init_kernel_params<T>(const KernelSpec&, Rng&);                     \
  template Tensor<T> linear_kernel_forward(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> glu_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> oglu_output_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> aoglu_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                   const Tensor<T>&);                                          \
  template Tensor<T> kernel_stack_forward(const Tensor<T>&, const KernelSpec&,                 \
                                          const KernelParams<T>&);                             \
  template Tensor<T> orthogonality_penalty(const KernelParams<T>&, double);

FFATTN_INSTANTIATE_KERNELS(float)
FFATTN_INSTANTIATE_KERNELS(double)

#undef FFATTN_INSTANTIATE_KERNELS

}  // namespace ffattn
