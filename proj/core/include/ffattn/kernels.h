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

#ifndef FFATTN_KERNELS_H_
#define FFATTN_KERNELS_H_

// Trainable positive feature maps phi(.) for kernelized attention.
//
// A kernel stack maps a head slice X [L x n] to features [L x n]. The last
// layer always produces strictly positive output:
//
//   LinearSoftplus  phi(X) = Softplus(X W)
//   GLU / OGLU      phi(X) = Softplus(X W_f) * sigmoid(X W_g)
//   AOGLU           phi(X) = Softplus(X W_f) * sigmoid((X U_g) V_g),  U_g: n x r
//
// Intermediate layers of a stack are plain GLUs (X W_f * sigmoid(X W_g)) for
// the gated variants and X W followed by the inner nonlinearity for
// LinearSoftplus. There are no bias terms and no normalization between layers.
//
// OGLU and AOGLU orthogonally initialize and regularize W_f; LinearSoftplus
// regularizes W and initializes it orthogonally when orthogonal_init is set.
// Plain GLU is neither.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ffattn/rng.h"
#include "ffattn/tensor.h"

namespace ffattn {

enum class KernelVariant { kLinearSoftplus, kGlu, kOglu, kAoglu };
enum class Nonlinearity { kSoftplus, kGelu, kSigmoid };

std::string_view to_string(KernelVariant variant);
std::string_view to_string(Nonlinearity nonlinearity);
// Throws ConfigError on an unknown name.
KernelVariant parse_kernel_variant(std::string_view name);
Nonlinearity parse_nonlinearity(std::string_view name);

struct KernelSpec {
  KernelVariant variant = KernelVariant::kLinearSoftplus;
  int depth = 1;
  int head_dim = 16;
  // AOGLU gate rank r; 0 selects head_dim / 4.
  int gate_rank = 0;
  bool orthogonal_init = true;
  // lambda of the orthogonality penalty.
  double ortho_reg_weight = 0.01;
  Nonlinearity inner_nonlinearity = Nonlinearity::kGelu;
  // AOGLU only: gate intermediate layers low-rank as well, not just the
  // output layer.
  bool lowrank_all_layers = false;

  bool gated() const { return variant != KernelVariant::kLinearSoftplus; }
  // Whether W / W_f is orthogonally initialized.
  bool orthogonal() const;
  int effective_gate_rank() const;
  // Whether layer `index` (0-based) uses a low-rank gate.
  bool layer_low_rank(int index) const;
  // Throws ConfigError naming the field.
  void validate() const;
};

// Weights of one layer of a stack. w is W (linear) or W_f (gated).
template <typename T>
struct KernelLayer {
  Tensor<T> w;
  std::optional<Tensor<T>> w_gate;
  std::optional<Tensor<T>> u_gate;
  std::optional<Tensor<T>> v_gate;

  bool low_rank() const { return u_gate.has_value(); }
};

template <typename T>
struct KernelParams {
  KernelVariant variant = KernelVariant::kLinearSoftplus;
  std::vector<KernelLayer<T>> layers;

  // All weight tensors in a fixed order, with names such as "l0.w_f".
  std::vector<Tensor<T>> tensors() const;
  std::vector<std::string> names() const;
  // Rebuilds from tensors() order; used by optimizers and checkpoints.
  void assign(std::span<const Tensor<T>> values);
  std::size_t count() const;
};

// Number of kernel parameters implied by a spec (per head, per attention
// layer).
std::size_t kernel_param_count(const KernelSpec& spec);

// Haar-distributed n x n orthogonal matrix: Q of the QR decomposition of a
// standard Gaussian draw with the signs of diag(R) folded into Q. Computed in
// double precision.
template <typename T>
Tensor<T> orthogonal_init(std::size_t n, Rng& rng);
template <typename T>
Tensor<T> orthogonal_init(std::size_t n, std::uint64_t seed);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename T>
Tensor<T> uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

template <typename T>
KernelParams<T> init_kernel_params(const KernelSpec& spec, Rng& rng);

// Softplus(X W).
template <typename T>
Tensor<T> linear_kernel_forward(const Tensor<T>& x, const Tensor<T>& w);
// X W_f * sigmoid(X W_g). Not positive in general.
template <typename T>
Tensor<T> glu_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& w_g);
// Softplus(X W_f) * sigmoid(X W_g).
template <typename T>
Tensor<T> oglu_output_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& w_g);
// Softplus(X W_f) * sigmoid((X U_g) V_g). Requires 1 <= r < n / 2.
template <typename T>
Tensor<T> aoglu_forward(const Tensor<T>& x, const Tensor<T>& w_f, const Tensor<T>& u_g,
                        const Tensor<T>& v_g);

template <typename T>
Tensor<T> kernel_stack_forward(const Tensor<T>& x, const KernelSpec& spec,
                               const KernelParams<T>& params);

// lambda * sum ||W^T W - I||_F^2 over the regularized matrices: every W of a
// LinearSoftplus stack, every W_f of an OGLU/AOGLU stack, nothing for GLU.
// A constant zero when the set is empty or lambda is zero.
template <typename T>
Tensor<T> orthogonality_penalty(const KernelParams<T>& params, double lambda);

}  // namespace ffattn

#endif  // FFATTN_KERNELS_H_
