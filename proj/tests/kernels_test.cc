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

#include <algorithm>
#include <cmath>

#include "ffattn/errors.h"
#include "ffattn/gradcheck.h"
#include "ffattn/kernels.h"
#include "ffattn/ops.h"
#include "ffattn/verify.h"

namespace ffattn {
namespace {

using TD = Tensor<double>;

constexpr KernelVariant kAll[] = {KernelVariant::kLinearSoftplus, KernelVariant::kGlu,
                                  KernelVariant::kOglu, KernelVariant::kAoglu};

KernelSpec spec_of(KernelVariant v, int depth, int n) {
  KernelSpec s;
  s.variant = v;
  s.depth = depth;
  s.head_dim = n;
  return s;
}

double max_dev_from_identity(const TD& q) {
  const TD g = matmul(transpose(q), q);
  double m = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      m = std::max(m, std::abs(g.at(i, j) - (i == j ? 1.0 : 0.0)));
    }
  }
  return m;
}

TEST(KernelSpec, Validation) {
  EXPECT_NO_THROW(spec_of(KernelVariant::kAoglu, 3, 16).validate());
  EXPECT_THROW(spec_of(KernelVariant::kGlu, 4, 16).validate(), ConfigError);
  EXPECT_THROW(spec_of(KernelVariant::kGlu, 0, 16).validate(), ConfigError);
  EXPECT_THROW(spec_of(KernelVariant::kGlu, 1, 1).validate(), ConfigError);
  KernelSpec s = spec_of(KernelVariant::kAoglu, 1, 16);
  s.gate_rank = 8;  // r < n/2 is strict
  EXPECT_THROW(s.validate(), ConfigError);
  s.gate_rank = 7;
  EXPECT_NO_THROW(s.validate());
  s.ortho_reg_weight = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(spec_of(KernelVariant::kAoglu, 1, 64).effective_gate_rank(), 16);
}

TEST(OrthogonalInit, OneByOne) {
  const TD q = orthogonal_init<double>(1, 5);
  EXPECT_EQ(std::abs(q[0]), 1.0);
}

TEST(OrthogonalInit, OrthonormalUpTo128) {
  for (std::size_t n : {2u, 8u, 31u, 64u, 128u}) {
    EXPECT_LE(max_dev_from_identity(orthogonal_init<double>(n, 17)), 1e-12) << n;
  }
  EXPECT_LE(max_dev_from_identity(
                TD({8, 8}, [] {
                  const auto f = orthogonal_init<float>(8, 17);
                  return std::vector<double>(f.data().begin(), f.data().end());
                }())),
            1e-6);
}

TEST(OrthogonalInit, SeedsDiffer) {
  const TD a = orthogonal_init<double>(8, 1);
  const TD b = orthogonal_init<double>(8, 2);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-3);
  EXPECT_EQ(orthogonal_init<double>(8, 1).to_vector(), a.to_vector());
}

TEST(LinearKernel, Values) {
  Rng rng(1);
  const TD w = random_tensor<double>({3, 3}, rng);
  for (double v : linear_kernel_forward(TD::zeros({2, 3}), w).to_vector()) {
    EXPECT_NEAR(v, 0.69314718055994531, 1e-15);
  }
  const TD out = linear_kernel_forward(TD({1, 2}, {1.0, -1.0}), TD::identity(2));
  EXPECT_NEAR(out[0], 1.313261687518222834, 1e-15);
  EXPECT_NEAR(out[1], 0.31326168751822283405, 1e-15);
  EXPECT_THROW(linear_kernel_forward(TD::zeros({2, 3}), TD::identity(2)), DimensionError);
}

TEST(Glu, Values) {
  const TD out = glu_forward(TD({1, 2}, {1.0, 0.0}), TD::identity(2), TD::identity(2));
  EXPECT_NEAR(out[0], 0.73105857863000487925, 1e-15);
  EXPECT_EQ(out[1], 0.0);
  Rng rng(2);
  const TD x = random_tensor<double>({4, 3}, rng);
  const TD closed = glu_forward(add_scalar(abs(x), 1.0), TD::identity(3), scale(TD::identity(3), -50.0));
  for (double v : closed.data()) EXPECT_LT(std::abs(v), 1e-15);
}

TEST(Glu, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const TD x = random_tensor<double>({5, 4}, rng);
  const TD params[] = {TD::parameter({4, 4}, random_tensor<double>({4, 4}, rng).to_vector()),
                       TD::parameter({4, 4}, random_tensor<double>({4, 4}, rng).to_vector())};
  const auto report = finite_difference_check<double>(
      [&](std::span<const TD> p) { return sum(square(glu_forward(x, p[0], p[1]))); }, params,
      1e-5);
  EXPECT_LE(report.max_rel_error(), 1e-5);
}

TEST(OgluOutput, Values) {
  Rng rng(4);
  const TD wf = random_tensor<double>({3, 3}, rng);
  const TD wg = random_tensor<double>({3, 3}, rng);
  for (double v : oglu_output_forward(TD::zeros({2, 3}), wf, wg).to_vector()) {
    EXPECT_NEAR(v, 0.34657359027997265471, 1e-15);
  }
  const TD one = oglu_output_forward(TD({1, 1}, {2.0}), TD::identity(1), TD::identity(1));
  EXPECT_NEAR(one[0], 1.873391977195959458, 1e-14);
  const TD x = random_tensor<double>({200, 3}, rng, 3.0);
  const TD out = oglu_output_forward(x, wf, wg);
  EXPECT_GT(*std::min_element(out.data().begin(), out.data().end()), 0.0);
}

TEST(Aoglu, MatchesMaterializedGate) {
  Rng rng(5);
  for (std::size_t n : {8u, 16u, 64u}) {
    const std::size_t r = n / 4;
    const TD x = random_tensor<double>({20, n}, rng, 2.0);
    const TD wf = orthogonal_init<double>(n, rng);
    const TD u = uniform_init<double>(n, r, n, rng);
    const TD v = uniform_init<double>(r, n, n, rng);
    const TD a = aoglu_forward(x, wf, u, v);
    const TD b = oglu_output_forward(x, wf, matmul(u, v));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Aoglu, ZeroInputAndRankBound) {
  Rng rng(6);
  const TD wf = random_tensor<double>({8, 8}, rng);
  for (double v : aoglu_forward(TD::zeros({3, 8}), wf, random_tensor<double>({8, 2}, rng),
                                random_tensor<double>({2, 8}, rng))
                      .to_vector()) {
    EXPECT_NEAR(v, 0.34657359027997265471, 1e-15);
  }
  EXPECT_THROW(aoglu_forward(TD::zeros({3, 8}), wf, random_tensor<double>({8, 4}, rng),
                             random_tensor<double>({4, 8}, rng)),
               ConfigError);
}

TEST(ParamCount, GatingArithmetic) {
  EXPECT_EQ(kernel_param_count(spec_of(KernelVariant::kAoglu, 1, 64)), 6144u);
  EXPECT_EQ(kernel_param_count(spec_of(KernelVariant::kGlu, 1, 64)), 8192u);
  EXPECT_EQ(kernel_param_count(spec_of(KernelVariant::kOglu, 1, 64)), 8192u);
  EXPECT_EQ(kernel_param_count(spec_of(KernelVariant::kLinearSoftplus, 1, 64)), 4096u);
  EXPECT_EQ(kernel_param_count(spec_of(KernelVariant::kAoglu, 3, 64)), 22528u);
  KernelSpec all = spec_of(KernelVariant::kAoglu, 3, 64);
  all.lowrank_all_layers = true;
  EXPECT_EQ(kernel_param_count(all), 3u * 6144u);
  Rng rng(1);
  EXPECT_EQ(init_kernel_params<double>(all, rng).count(), 3u * 6144u);
}

TEST(KernelStack, DepthOneLinearIsSoftplus) {
  Rng rng(7);
  KernelSpec s = spec_of(KernelVariant::kLinearSoftplus, 1, 4);
  KernelParams<double> p = init_kernel_params<double>(s, rng);
  const TD id = TD::identity(4);
  p.assign(std::span<const TD>(&id, 1));
  const TD x = random_tensor<double>({6, 4}, rng, 3.0);
  EXPECT_EQ(kernel_stack_forward(x, s, p).to_vector(), softplus(x).to_vector());
  const auto fresh = init_kernel_params<double>(s, rng);
  EXPECT_EQ(kernel_stack_forward(x, s, fresh).to_vector(),
            linear_kernel_forward(x, fresh.layers[0].w).to_vector());
}

TEST(KernelStack, DepthTwoOgluComposition) {
  Rng rng(8);
  const KernelSpec s = spec_of(KernelVariant::kOglu, 2, 6);
  const auto p = init_kernel_params<double>(s, rng);
  const TD x = random_tensor<double>({10, 6}, rng, 3.0);
  const TD h = glu_forward(x, p.layers[0].w, *p.layers[0].w_gate);
  const TD expect = oglu_output_forward(h, p.layers[1].w, *p.layers[1].w_gate);
  EXPECT_EQ(kernel_stack_forward(x, s, p).to_vector(), expect.to_vector());
}

TEST(KernelStack, MismatchedParamsRejected) {
  Rng rng(9);
  const auto p = init_kernel_params<double>(spec_of(KernelVariant::kOglu, 2, 6), rng);
  EXPECT_THROW(kernel_stack_forward(TD::zeros({2, 6}), spec_of(KernelVariant::kOglu, 3, 6), p),
               ContractError);
  EXPECT_THROW(kernel_stack_forward(TD::zeros({2, 6}), spec_of(KernelVariant::kGlu, 2, 6), p),
               ContractError);
}

TEST(KernelStack, PositivityAllVariantsAndDepths) {
  Rng rng(10);
  NoGradGuard guard;
  for (KernelVariant v : kAll) {
    for (int depth = 1; depth <= 3; ++depth) {
      const KernelSpec s = spec_of(v, depth, 8);
      const auto p = init_kernel_params<double>(s, rng);
      const TD out = kernel_stack_forward(random_tensor<double>({10000, 8}, rng, 3.0), s, p);
      EXPECT_GT(*std::min_element(out.data().begin(), out.data().end()), 0.0)
          << to_string(v) << " depth " << depth;
    }
  }
}

TEST(KernelInit, OrthogonalWhereRegularized) {
  Rng rng(11);
  for (KernelVariant v : kAll) {
    const auto p = init_kernel_params<double>(spec_of(v, 2, 8), rng);
    for (const auto& layer : p.layers) {
      const double dev = max_dev_from_identity(layer.w);
      if (v == KernelVariant::kGlu) {
        EXPECT_GT(dev, 1e-3);
      } else {
        EXPECT_LE(dev, 1e-12);
      }
    }
  }
}

TEST(Penalty, Values) {
  Rng rng(12);
  KernelSpec s = spec_of(KernelVariant::kLinearSoftplus, 1, 2);
  KernelParams<double> p = init_kernel_params<double>(s, rng);
  EXPECT_LE(orthogonality_penalty(p, 1.0).item(), 1e-10);
  const TD two = scale(TD::identity(2), 2.0);
  p.assign(std::span<const TD>(&two, 1));
  EXPECT_NEAR(orthogonality_penalty(p, 1.0).item(), 18.0, 1e-12);
  EXPECT_EQ(orthogonality_penalty(p, 0.0).item(), 0.0);
  const auto glu = init_kernel_params<double>(spec_of(KernelVariant::kGlu, 3, 8), rng);
  EXPECT_EQ(orthogonality_penalty(glu, 5.0).item(), 0.0);
}

TEST(Penalty, RegularizedSetPerVariant) {
  Rng rng(13);
  // Breaking orthogonality of W_g/U_g/V_g never changes the penalty; W_f does.
  KernelSpec s = spec_of(KernelVariant::kAoglu, 1, 8);
  KernelParams<double> p = init_kernel_params<double>(s, rng);
  const double base = orthogonality_penalty(p, 1.0).item();
  p.layers[0].u_gate = scale(*p.layers[0].u_gate, 7.0);
  EXPECT_EQ(orthogonality_penalty(p, 1.0).item(), base);
  p.layers[0].w = scale(p.layers[0].w, 1.5);
  EXPECT_GT(orthogonality_penalty(p, 1.0).item(), base + 1.0);
}

TEST(Penalty, GradientIsFourWTimesDeviation) {
  Rng rng(14);
  const TD w = TD::parameter({6, 6}, random_tensor<double>({6, 6}, rng).to_vector());
  KernelParams<double> p;
  p.variant = KernelVariant::kLinearSoftplus;
  p.layers.push_back({w, std::nullopt, std::nullopt, std::nullopt});
  const auto g = backward(orthogonality_penalty(p, 1.0));
  const TD expect = scale(matmul(w.detach(), sub(matmul(transpose(w.detach()), w.detach()),
                                                 TD::identity(6))),
                          4.0);
  for (std::size_t i = 0; i < expect.numel(); ++i) {
    EXPECT_NEAR(g.at(w)[i], expect[i], 1e-12 * std::max(1.0, std::abs(expect[i])));
  }
}

TEST(Names, ParseRoundTrip) {
  for (KernelVariant v : kAll) EXPECT_EQ(parse_kernel_variant(to_string(v)), v);
  EXPECT_EQ(parse_kernel_variant("linear_softplus"), KernelVariant::kLinearSoftplus);
  EXPECT_THROW(parse_kernel_variant("relu"), ConfigError);
  EXPECT_EQ(parse_nonlinearity("sigmoid"), Nonlinearity::kSigmoid);
}

}  // namespace
}  // namespace ffattn
