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
#include "ffattn/model.h"
#include "ffattn/ops.h"
#include "ffattn/tasks.h"
#include "ffattn/train.h"
#include "ffattn/verify.h"

namespace ffattn {
namespace {

using TD = Tensor<double>;

ModelConfig small_config(KernelVariant v = KernelVariant::kLinearSoftplus, int depth = 1) {
  ModelConfig c;
  c.vocab_size = 30;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.ffn_dim = 24;
  c.max_len = 40;
  c.num_classes = 3;
  c.dropout = 0.0;
  c.kernel.variant = v;
  c.kernel.depth = depth;
  c.kernel.head_dim = 8;
  return c;
}

Batch batch_from(const std::vector<std::vector<std::int32_t>>& seqs, std::size_t max_len,
                 TaskKind kind = TaskKind::kClassify) {
  Dataset ds;
  ds.kind = kind;
  for (const auto& s : seqs) {
    Example e;
    e.tokens = s;
    if (kind == TaskKind::kMatch) e.tokens_b = s;
    ds.examples.push_back(e);
  }
  std::vector<std::size_t> idx(seqs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(ds, idx, max_len);
}

double max_abs_diff(const TD& a, const TD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.d_model = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.max_len = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.kernel.head_dim = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(BuildModel, SameSeedBitIdentical) {
  const auto a = build_model<double>(small_config(KernelVariant::kOglu, 2), 42);
  const auto b = build_model<double>(small_config(KernelVariant::kOglu, 2), 42);
  const auto c = build_model<double>(small_config(KernelVariant::kOglu, 2), 43);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].to_vector(), pb[i].to_vector());
  EXPECT_NE(pa[0].to_vector(), c.parameters()[0].to_vector());
  EXPECT_EQ(a.parameter_names().size(), pa.size());
}

TEST(BuildModel, RegularizedKernelsStartOrthogonal) {
  for (KernelVariant v : {KernelVariant::kLinearSoftplus, KernelVariant::kOglu,
                          KernelVariant::kAoglu}) {
    const auto m = build_model<float>(small_config(v, 2), 7);
    EXPECT_LE(m.orthogonality_deviation().item(), 1e-9f) << to_string(v);
    for (const auto& block : m.blocks()) {
      for (const auto& kp : block.attention.query_kernels) {
        for (const auto& layer : kp.layers) {
          const auto g = matmul(transpose(layer.w), layer.w);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
              EXPECT_NEAR(g.at(i, j), i == j ? 1.0f : 0.0f, 1e-5f);
            }
          }
        }
      }
    }
  }
}

TEST(ForwardClassify, ShapeAndIdenticalRows) {
  ModelConfig c = small_config();
  c.d_model = 64;
  c.n_heads = 4;
  c.kernel.head_dim = 16;
  c.max_len = 32;
  const auto m = build_model<float>(c, 1);
  Rng rng(3);
  std::vector<std::int32_t> s(32);
  for (auto& t : s) t = static_cast<std::int32_t>(rng.uniform_int(1, 29));
  const Batch b = batch_from({s, s, s, s}, 32);
  const auto logits = forward_classify(m, b);
  EXPECT_EQ(logits.shape(), (Shape{4, 3}));
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(logits.at(r, k), logits.at(0, k), 1e-6);
  }
}

TEST(ForwardClassify, PaddingExtensionInvariance) {
  for (Pooling pooling : {Pooling::kMean, Pooling::kCls}) {
    ModelConfig c = small_config(KernelVariant::kOglu, 1);
    c.pooling = pooling;
    const auto m = build_model<float>(c, 2);
    const std::vector<std::int32_t> s{3, 5, 7, 9, 11};
    const auto short_logits = forward_classify(m, batch_from({s}, 40));
    const auto long_logits = forward_classify(m, batch_from({s, std::vector<std::int32_t>(20, 4)}, 40));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(long_logits.at(0, k), short_logits.at(0, k), 1e-5);
  }
}

TEST(ForwardClassify, OutOfVocabularyIsDataError) {
  const auto m = build_model<float>(small_config(), 3);
  EXPECT_THROW(forward_classify(m, batch_from({{1, 2, 30}}, 40)), DataError);
}

TEST(ForwardClassify, UntrainedIsNearChance) {
  ModelConfig c = small_config();
  c.num_classes = 2;
  c.vocab_size = 64;
  c.max_len = 64;
  const auto m = build_model<float>(c, 5);
  const Dataset ds = gen_text_classification(9, 1000, 64, 64, 2);
  const EvalResult r = evaluate(m, ds, 100);
  EXPECT_NEAR(r.accuracy, 0.5, 0.10);
}

TEST(ForwardMatch, EncoderIndependence) {
  ModelConfig c = small_config(KernelVariant::kOglu, 1);
  c.task = TaskKind::kMatch;
  c.num_classes = 2;
  const auto m = build_model<double>(c, 4);
  const std::vector<std::int32_t> a{2, 4, 6, 8};
  const std::vector<std::int32_t> b{1, 3, 5, 7, 9, 11};
  const auto ua = m.encode(a, PadMask::all_real(a.size()));
  const auto ub = m.encode(b, PadMask::all_real(b.size()));
  const auto ua2 = m.encode(a, PadMask::all_real(a.size()));
  EXPECT_EQ(ua.to_vector(), ua2.to_vector());

  // Identical pair: |u - v| = 0 exactly.
  const Batch same = batch_from({a}, 40, TaskKind::kMatch);
  const auto u = m.encode(same.first.row(0), same.first.row_mask(0));
  const auto v = m.encode(same.second->row(0), same.second->row_mask(0));
  for (double x : abs(sub(u, v)).to_vector()) EXPECT_EQ(x, 0.0);

  Batch pair = same;
  pair.second = batch_from({b}, 40).first;
  const auto logits = forward_match(m, pair);
  EXPECT_EQ(logits.shape(), (Shape{1, 2}));
  const auto expect = m.match_head(ua, ub);
  EXPECT_LE(max_abs_diff(logits, expect), 1e-12);
}

TEST(ForwardLogits, TaskMismatchIsConfigError) {
  const auto m = build_model<float>(small_config(), 1);
  EXPECT_THROW(forward_match(m, batch_from({{1, 2}}, 40, TaskKind::kMatch)), ConfigError);
}

TEST(ForwardClassify, LinearEqualsQuadraticEndToEnd) {
  for (KernelVariant v : {KernelVariant::kLinearSoftplus, KernelVariant::kGlu,
                          KernelVariant::kOglu, KernelVariant::kAoglu}) {
    ModelConfig c = small_config(v, 2);
    c.eps = 0.0;
    const auto lin = build_model<double>(c, 8);
    c.attention = AttentionKind::kKernelQuadratic;
    const auto quad = build_model<double>(c, 8);
    const Batch b = batch_from({{1, 2, 3, 4, 5, 6, 7}, {8, 9, 10}}, 40);
    EXPECT_LE(max_abs_diff(forward_classify(lin, b), forward_classify(quad, b)), 1e-8)
        << to_string(v);
  }
}

TEST(CountParams, ClosedFormsAndGatingClaims) {
  for (int variant = 0; variant < 3; ++variant) {
    ModelConfig c = small_config();
    c.n_layers = 1 + variant;
    c.pooling = variant == 1 ? Pooling::kCls : Pooling::kMean;
    if (variant == 2) {
      c.task = TaskKind::kMatch;
      c.num_classes = 2;
    }
    const auto m = build_model<float>(c, 1);
    const ParamAccount a = count_params(m);
    EXPECT_EQ(a.base_params, base_param_closed_form(c));
    std::uint64_t total = 0;
    for (const auto& p : m.parameters()) total += p.numel();
    EXPECT_EQ(total, a.base_params + a.kernel_params);
  }

  ModelConfig c = small_config();
  c.n_layers = 1;
  c.n_heads = 4;
  c.d_model = 64;
  c.kernel.head_dim = 16;
  c.kernel.variant = KernelVariant::kLinearSoftplus;
  const auto lin = count_params(c).kernel_params;
  EXPECT_EQ(lin, 1024u);
  c.kernel.variant = KernelVariant::kGlu;
  EXPECT_EQ(count_params(c).kernel_params, 2 * lin);
  c.kernel.variant = KernelVariant::kAoglu;
  EXPECT_EQ(4 * count_params(c).kernel_params, 3 * 2 * lin);
}

TEST(BudgetCheck, StrictLimit) {
  ParamAccount zero{1000, 0, 0.0};
  EXPECT_TRUE(budget_check(zero).pass);
  EXPECT_EQ(budget_check(zero).ratio, 0.0);
  ParamAccount edge{1000, 100, 0.1};
  EXPECT_FALSE(budget_check(edge).pass);
  ParamAccount below{1000, 99, 0.099};
  EXPECT_TRUE(budget_check(below).pass);
}

TEST(BudgetCheck, ThreeLayerGluOnShippedSmallConfigFails) {
  ModelConfig c;
  c.vocab_size = 64;
  c.d_model = 64;
  c.n_heads = 4;
  c.n_layers = 2;
  c.ffn_dim = 128;
  c.max_len = 128;
  c.num_classes = 2;
  c.kernel.variant = KernelVariant::kGlu;
  c.kernel.depth = 3;
  c.kernel.head_dim = 16;
  const ParamAccount a = count_params(c);
  EXPECT_EQ(a.base_params, 78978u);
  EXPECT_EQ(a.kernel_params, 12288u);
  EXPECT_NEAR(a.ratio, 0.15558763199878447163, 1e-15);
  EXPECT_FALSE(budget_check(a).pass);
}

TEST(Loss, FiniteAndOneStepReducesLoss) {
  int improved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c = small_config(trial % 2 ? KernelVariant::kOglu : KernelVariant::kLinearSoftplus);
    c.n_layers = 1;
    c.num_classes = 2;
    const auto m = build_model<double>(c, static_cast<std::uint64_t>(trial));
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    std::vector<std::vector<std::int32_t>> seqs(4);
    for (auto& s : seqs) {
      s.resize(static_cast<std::size_t>(rng.uniform_int(3, 12)));
      for (auto& t : s) t = static_cast<std::int32_t>(rng.uniform_int(1, 29));
    }
    Batch b = batch_from(seqs, 40);
    for (auto& l : b.labels) l = static_cast<int>(rng.uniform_int(0, 1));
    const auto params = m.parameters();
    const LossTerms<double> terms = model_loss(m, b);
    const double before = terms.total.item();
    ASSERT_TRUE(std::isfinite(before));
    const auto grads = backward(terms.total, std::span<const TD>(params));
    std::vector<TD> stepped;
    for (const auto& p : params) {
      stepped.push_back(p.with_values(sub(p.detach(), scale(grads.at(p), 1e-3)).to_vector()));
    }
    auto m2 = m;
    m2.set_parameters(stepped);
    improved += model_loss(m2, b).total.item() < before;
  }
  EXPECT_GE(improved, 95);
}

TEST(Dropout, OnlyActiveInTraining) {
  ModelConfig c = small_config();
  c.dropout = 0.5;
  const auto m = build_model<double>(c, 1);
  const Batch b = batch_from({{1, 2, 3, 4}}, 40);
  Rng rng(5);
  const auto eval1 = forward_classify(m, b);
  const auto eval2 = forward_classify(m, b);
  EXPECT_EQ(eval1.to_vector(), eval2.to_vector());
  const auto train = forward_classify(m, b, ForwardOptions{true, &rng});
  EXPECT_NE(train.to_vector(), eval1.to_vector());
}

}  // namespace
}  // namespace ffattn
