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
#include <limits>

#include "ffattn/errors.h"
#include "ffattn/gradcheck.h"
#include "ffattn/ops.h"
#include "ffattn/tensor.h"
#include "ffattn/verify.h"

namespace ffattn {
namespace {

using TD = Tensor<double>;

TD mat(std::size_t r, std::size_t c, std::vector<double> v) { return TD({r, c}, std::move(v)); }
TD param(const TD& t) { return TD::parameter(t.shape(), t.to_vector()); }

TEST(Tensor, RejectsSizeMismatch) {
  EXPECT_THROW(TD({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(TD({2, 0}, {}), DimensionError);
}

TEST(Tensor, ConstantsNeverRequireGrad) {
  const TD a = mat(1, 2, {1, 2});
  EXPECT_FALSE(a.requires_grad());
  EXPECT_FALSE(add(a, a).requires_grad());
  const TD p = param(a);
  EXPECT_TRUE(p.requires_grad());
  {
    NoGradGuard guard;
    EXPECT_FALSE(add(p, a).requires_grad());
  }
  EXPECT_TRUE(add(p, a).requires_grad());
}

TEST(Matmul, IdentityAndHandProduct) {
  const TD m = mat(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matmul(TD::identity(2), m).to_vector(), m.to_vector());
  const TD p = matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4}));
  EXPECT_EQ(p.shape(), (Shape{1, 1}));
  EXPECT_EQ(p[0], 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(mat(2, 3, {1, 2, 3, 4, 5, 6}), mat(2, 2, {1, 2, 3, 4}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  const TD params[] = {param(random_tensor<double>({5, 4}, rng)),
                       param(random_tensor<double>({4, 3}, rng))};
  const TD w = random_tensor<double>({5, 3}, rng);
  const auto report = finite_difference_check<double>(
      [&](std::span<const TD> p) { return sum(mul(matmul(p[0], p[1]), w)); }, params, 1e-5);
  EXPECT_LE(report.max_rel_error(), 1e-6);
}

TEST(Softplus, Values) {
  EXPECT_NEAR(softplus(TD::scalar(0.0)).item(), 0.69314718055994531, 1e-15);
  const double tiny = softplus(TD::scalar(-40.0)).item();
  EXPECT_GT(tiny, 0.0);
  EXPECT_NEAR(tiny, 4.2483542552915889863e-18, 1e-30);
  EXPECT_NEAR(softplus(TD::scalar(10.0)).item(), 10.000045398899216865, 1e-13);
  EXPECT_EQ(softplus(TD::scalar(800.0)).item(), 800.0);
  EXPECT_GT(softplus(TD::scalar(-700.0)).item(), 0.0);
}

TEST(Softplus, DerivativeIsSigmoid) {
  const TD x = param(mat(1, 3, {-3.0, 0.5, 4.0}));
  const auto g = backward(sum(softplus(x)));
  const TD s = sigmoid(x.detach());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.at(x)[i], s[i], 1e-15);
}

TEST(Sigmoid, Values) {
  EXPECT_EQ(sigmoid(TD::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(sigmoid(TD::scalar(2.0)).item(), 0.88079707797788244406, 1e-15);
  for (double x : {-800.0, -700.0, 700.0, 800.0}) {
    const double v = sigmoid(TD::scalar(x)).item();
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  Rng rng(3);
  const TD x = random_tensor<double>({1, 50}, rng, 5.0);
  const TD s = add(sigmoid(x), sigmoid(scale(x, -1.0)));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Elementwise, AddAndMeanSquare) {
  EXPECT_EQ(add(mat(1, 2, {1, 2}), mat(1, 2, {3, 4})).to_vector(), (std::vector<double>{4, 6}));
  EXPECT_EQ(mean(square(mat(1, 2, {3, 4}))).item(), 12.5);
}

TEST(Elementwise, SuffixBroadcast) {
  const TD x = mat(2, 3, {1, 2, 3, 4, 5, 6});
  const TD b({3}, {10, 20, 30});
  EXPECT_EQ(add(x, b).to_vector(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_THROW(add(x, TD({2}, {1, 2})), DimensionError);
  const TD pb = param(b);
  const auto g = backward(sum(mul(x, pb)));
  EXPECT_EQ(g.at(pb).to_vector(), (std::vector<double>{5, 7, 9}));
}

TEST(Elementwise, DivisionByZeroPropagates) {
  const TD r = div(mat(1, 2, {1, 0}), mat(1, 2, {0, 0}));
  EXPECT_TRUE(std::isinf(r[0]));
  EXPECT_TRUE(std::isnan(r[1]));
}

TEST(Elementwise, GeluValuesAndGradient) {
  EXPECT_NEAR(gelu(TD::scalar(1.0)).item(), 0.84134474606854294859, 1e-15);
  EXPECT_NEAR(gelu(TD::scalar(-0.5)).item(), -0.15426876936299344818, 1e-15);
  Rng rng(5);
  const TD params[] = {param(random_tensor<double>({3, 4}, rng, 2.0))};
  const auto report = finite_difference_check<double>(
      [](std::span<const TD> p) { return sum(gelu(p[0])); }, params, 1e-5);
  EXPECT_LE(report.max_rel_error(), 1e-5);
}

TEST(SoftmaxRows, Values) {
  EXPECT_EQ(softmax_rows(mat(1, 2, {0, 0})).to_vector(), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(softmax_rows(mat(1, 2, {1000, 1000})).to_vector(), (std::vector<double>{0.5, 0.5}));
  const TD s = softmax_rows(mat(1, 3, {1, 2, 3}));
  EXPECT_NEAR(s[0], 0.090030573170380457998, 1e-15);
  EXPECT_NEAR(s[1], 0.24472847105479765247, 1e-15);
  EXPECT_NEAR(s[2], 0.66524095577482188953, 1e-15);
}

TEST(SoftmaxRows, RowsSumToOneAndShiftInvariant) {
  Rng rng(8);
  const TD x = random_tensor<double>({6, 9}, rng, 10.0);
  const TD a = softmax_rows(x);
  const TD b = softmax_rows(add_scalar(x, 123.0));
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      total += a.at(r, c);
      EXPECT_NEAR(a.at(r, c), b.at(r, c), 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Backward, SumAndSquare) {
  const TD w = param(mat(2, 2, {1, -2, 3, 0.5}));
  EXPECT_EQ(backward(sum(w)).at(w).to_vector(), (std::vector<double>(4, 1.0)));
  const auto g = backward(sum(square(w)));
  EXPECT_EQ(g.at(w).shape(), w.shape());
  EXPECT_EQ(g.at(w).to_vector(), (std::vector<double>{2, -4, 6, 1}));
}

TEST(Backward, Contracts) {
  const TD w = param(mat(1, 2, {1, 2}));
  EXPECT_THROW(backward(square(w)), ContractError);
  const TD loss = sum(square(w));
  backward(loss);
  EXPECT_THROW(backward(loss), StateError);
}

TEST(Backward, RequestedParamsGetExactlyOneEntry) {
  const TD a = param(mat(1, 2, {1, 2}));
  const TD unused = param(mat(2, 2, {1, 2, 3, 4}));
  const TD params[] = {a, unused};
  const auto g = backward(sum(a), std::span<const TD>(params));
  EXPECT_EQ(g.size(), 2u);
  EXPECT_EQ(g.at(unused).shape(), unused.shape());
  EXPECT_EQ(g.at(unused).to_vector(), (std::vector<double>(4, 0.0)));
}

TEST(Backward, DeterministicAcrossCalls) {
  Rng rng(1);
  const TD x = random_tensor<double>({4, 5}, rng);
  const TD w = param(random_tensor<double>({5, 5}, rng));
  auto grad = [&] { return backward(sum(softplus(matmul(x, w)))).at(w).to_vector(); };
  EXPECT_EQ(grad(), grad());
}

TEST(GradCheck, Contracts) {
  const TD params[] = {param(mat(2, 2, {1, 2, 3, 4}))};
  auto f = [](std::span<const TD> p) { return sum(p[0]); };
  EXPECT_THROW(finite_difference_check<double>(f, params, 0.0), ContractError);
  const auto report = finite_difference_check<double>(f, params, 1e-5);
  EXPECT_LE(report.max_rel_error(), 1e-9);
}

TEST(GradCheck, OrthogonalityObjective) {
  Rng rng(4);
  const TD params[] = {param(random_tensor<double>({5, 5}, rng))};
  const TD id = TD::identity(5);
  const auto report = finite_difference_check<double>(
      [&](std::span<const TD> p) { return sum(square(sub(matmul(transpose(p[0]), p[0]), id))); },
      params, 1e-5);
  EXPECT_LE(report.max_rel_error(), 1e-6);
}

TEST(GradCheck, NonFiniteMarksFailure) {
  const TD params[] = {param(mat(1, 2, {1, 2}))};
  const auto report = finite_difference_check<double>(
      [](std::span<const TD> p) { return sum(log(sub(p[0], p[0]))); }, params, 1e-5);
  ASSERT_EQ(report.params.size(), 1u);
  EXPECT_FALSE(report.params[0].finite);
  EXPECT_FALSE(report.passed(1.0));
}

// Random graphs over the differentiable ops agree with central differences.
TEST(Property, RandomComposedGraphs) {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const std::size_t k = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 4));
    const TD params[] = {param(random_tensor<double>({m, k}, rng)),
                         param(random_tensor<double>({k, n}, rng)),
                         param(random_tensor<double>({n}, rng)),
                         param(random_tensor<double>({m, n}, rng))};
    const int shape_seed = static_cast<int>(rng.uniform_int(0, 3));
    const std::vector<int> labels(m, 1);
    auto f = [&](std::span<const TD> p) {
      TD h = add(matmul(p[0], p[1]), p[2]);
      switch (shape_seed) {
        case 0: h = mul(softplus(h), sigmoid(p[3])); break;
        case 1: h = gelu(add(h, square(p[3]))); break;
        case 2: h = div(h, add_scalar(exp(scale(p[3], 0.3)), 1.0)); break;
        default: h = softmax_rows(sub(h, p[3])); break;
      }
      const TD lnorm = layer_norm_rows(h, TD::full({n}, 1.0), TD::zeros({n}), 1e-5);
      return add(mean(square(h)), cross_entropy(add(lnorm, h), labels));
    };
    const auto report = finite_difference_check<double>(f, params, 1e-5);
    EXPECT_TRUE(report.passed(1e-4)) << "trial " << trial << " err " << report.max_rel_error();
  }
}

TEST(Ops, GatherRowsRejectsOutOfRange) {
  const TD table = mat(3, 2, {1, 2, 3, 4, 5, 6});
  const std::int32_t ok[] = {2, 0};
  EXPECT_EQ(gather_rows(table, std::span<const std::int32_t>(ok)).to_vector(),
            (std::vector<double>{5, 6, 1, 2}));
  const std::int32_t bad[] = {3};
  EXPECT_THROW(gather_rows(table, std::span<const std::int32_t>(bad)), DataError);
}

TEST(Ops, DropoutZeroRateIsIdentity) {
  Rng rng(2);
  const TD x = random_tensor<double>({3, 3}, rng);
  EXPECT_EQ(dropout(x, 0.0, rng).to_vector(), x.to_vector());
  const TD y = dropout(TD::full({100, 100}, 1.0), 0.25, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(v, 1.0 / 0.75, 1e-15);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e4, 0.25, 0.02);
}

TEST(Ops, FloatAndDoubleAgree) {
  Rng rng(6);
  const TD x = random_tensor<double>({4, 4}, rng);
  const Tensor<float> xf({4, 4}, std::vector<float>(x.data().begin(), x.data().end()));
  const auto a = softmax_rows(softplus(x));
  const auto b = softmax_rows(softplus(xf));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

}  // namespace
}  // namespace ffattn
