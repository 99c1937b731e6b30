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

#include "ffattn/verify.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ffattn/gradcheck.h"
#include "ffattn/kernels.h"
#include "ffattn/ops.h"

namespace ffattn {
namespace {

constexpr KernelVariant kVariants[] = {KernelVariant::kLinearSoftplus, KernelVariant::kGlu,
                                       KernelVariant::kOglu, KernelVariant::kAoglu};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

KernelSpec make_spec(KernelVariant variant, int depth, int n) {
  KernelSpec spec;
  spec.variant = variant;
  spec.depth = depth;
  spec.head_dim = n;
  return spec;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_oracle(VerifyReport& report, const VerifyOptions& options) {
  Rng rng = Rng::derive(options.seed, 1);
  for (KernelVariant variant : kVariants) {
    for (int depth = 1; depth <= 3; ++depth) {
      double worst = 0.0;
      for (int t = 0; t < options.oracle_trials; ++t) {
        const int n = static_cast<int>(rng.uniform_int(5, 16));
        const std::size_t length = static_cast<std::size_t>(rng.uniform_int(1, 64));
        const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 16));
        worst = std::max(worst, oracle_trial(make_spec(variant, depth, n), length, d, rng));
      }
      report.items.push_back({"oracle equivalence " + std::string(to_string(variant)) + " depth " +
                                  std::to_string(depth),
                              worst <= 1e-10, "max abs diff " + sci(worst)});
    }
  }
}

void check_positivity(VerifyReport& report, const VerifyOptions& options) {
  Rng rng = Rng::derive(options.seed, 2);
  NoGradGuard no_grad;
  const int n = 8;
  for (KernelVariant variant : kVariants) {
    for (int depth = 1; depth <= 3; ++depth) {
      const KernelSpec spec = make_spec(variant, depth, n);
      const auto params = init_kernel_params<double>(spec, rng);
      const Tensor<double> x = random_tensor<double>(
          {static_cast<std::size_t>(options.positivity_samples), static_cast<std::size_t>(n)}, rng,
          3.0);
      const Tensor<double> phi = kernel_stack_forward(x, spec, params);
      const double lo = *std::min_element(phi.data().begin(), phi.data().end());
      report.items.push_back({"positivity " + std::string(to_string(variant)) + " depth " +
                                  std::to_string(depth),
                              lo > 0.0, "min " + sci(lo)});
    }
  }
}

void check_orthogonal_init(VerifyReport& report, const VerifyOptions& options) {
  double worst = 0.0;
  for (std::size_t n : {1u, 2u, 8u, 64u, 128u}) {
    const Tensor<double> q = orthogonal_init<double>(n, options.seed + n);
    const Tensor<double> g = matmul(transpose(q), q);
    worst = std::max(worst, max_abs_diff(g, Tensor<double>::identity(n)));
  }
  report.items.push_back({"orthogonal init QtQ = I", worst <= 1e-12, "max dev " + sci(worst)});
}

void check_aoglu_materialization(VerifyReport& report, const VerifyOptions& options) {
  Rng rng = Rng::derive(options.seed, 3);
  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t n : {8u, 16u, 64u}) {
    const std::size_t r = n / 4;
    const auto x = random_tensor<double>({32, n}, rng, 2.0);
    const auto wf = orthogonal_init<double>(n, rng);
    const auto u = uniform_init<double>(n, r, n, rng);
    const auto v = uniform_init<double>(r, n, n, rng);
    worst = std::max(worst, max_abs_diff(aoglu_forward(x, wf, u, v),
                                         oglu_output_forward(x, wf, matmul(u, v))));
  }
  report.items.push_back({"AOGLU equals OGLU with W_g = U V", worst <= 1e-12, "max diff " + sci(worst)});
}

void check_penalty_gradient(VerifyReport& report, const VerifyOptions& options) {
  Rng rng = Rng::derive(options.seed, 4);
  const std::size_t n = 6;
  const auto w = Tensor<double>::parameter({n, n}, random_tensor<double>({n, n}, rng).to_vector());
  const auto id = Tensor<double>::identity(n);
  auto f = [&](std::span<const Tensor<double>> p) {
    return sum(square(sub(matmul(transpose(p[0]), p[0]), id)));
  };
  const Tensor<double> params[] = {w};
  const auto grads = backward(f(params), std::span<const Tensor<double>>(params));
  double worst = 0.0;
  {
    NoGradGuard no_grad;
    const auto analytic = scale(matmul(w, sub(matmul(transpose(w), w), id)), 4.0);
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
      const double g = grads.at(w)[i];
      worst = std::max(worst, std::abs(g - analytic[i]) /
                                  std::max({std::abs(g), std::abs(analytic[i]), 1e-8}));
    }
  }
  const auto fd = finite_difference_check<double>(f, params, 1e-5);
  report.items.push_back({"penalty gradient 4W(WtW - I)", worst <= 1e-12 && fd.passed(1e-6),
                          "analytic " + sci(worst) + ", finite difference " + sci(fd.max_rel_error())});
}

// Tiny two-sequence batch with one padded row.
Batch tiny_batch(int vocab) {
  Batch b;
  b.kind = TaskKind::kClassify;
  b.first.batch = 2;
  b.first.length = 6;
  b.first.ids = {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, kPadId, kPadId};
  for (auto& id : b.first.ids) {
    if (id != kPadId) id = 1 + (id - 1) % (vocab - 1);
  }
  b.first.mask = {true, true, true, true, true, true, true, true, true, true, false, false};
  b.labels = {1, 0};
  return b;
}

void check_model_gradients(VerifyReport& report, const VerifyOptions& options) {
  struct Case {
    std::string label;
    AttentionKind kind;
    KernelVariant variant;
    int depth;
  };
  const Case cases[] = {
      {"softmax", AttentionKind::kSoftmax, KernelVariant::kLinearSoftplus, 1},
      {"linear depth 1", AttentionKind::kKernelLinear, KernelVariant::kLinearSoftplus, 1},
      {"linear depth 2", AttentionKind::kKernelLinear, KernelVariant::kLinearSoftplus, 2},
      {"glu depth 1", AttentionKind::kKernelLinear, KernelVariant::kGlu, 1},
      {"oglu depth 2", AttentionKind::kKernelLinear, KernelVariant::kOglu, 2},
      {"aoglu depth 3", AttentionKind::kKernelLinear, KernelVariant::kAoglu, 3},
  };
  for (const Case& c : cases) {
    ModelConfig config;
    config.vocab_size = 10;
    config.d_model = 8;
    config.n_heads = 2;
    config.n_layers = 1;
    config.ffn_dim = 12;
    config.max_len = 6;
    config.num_classes = 2;
    config.dropout = 0.0;
    config.eps = 0.0;
    config.attention = c.kind;
    config.kernel = make_spec(c.variant, c.depth, config.head_dim());
    const Model<double> model(config, options.seed);
    const Batch batch = tiny_batch(config.vocab_size);
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    auto loss = [&](std::span<const Tensor<double>> values) {
      Model<double> copy = model;
      copy.set_parameters(values);
      return model_loss(copy, batch).total;
    };
    const auto fd = finite_difference_check<double>(loss, params, 1e-5, names);
    std::string worst_name;
    double worst = -1.0;
    for (const auto& p : fd.params) {
      if (p.max_rel_error > worst) {
        worst = p.max_rel_error;
        worst_name = p.name;
      }
    }
    report.items.push_back({"finite differences " + c.label + " (" +
                                std::to_string(params.size()) + " groups)",
                            fd.passed(1e-4), "max rel err " + sci(worst) + " at " + worst_name});
  }
}

void check_param_counts(VerifyReport& report) {
  const int n = 64;
  const auto count = [&](KernelVariant v, int depth) {
    return static_cast<std::uint64_t>(kernel_param_count(make_spec(v, depth, n)));
  };
  const auto lin = count(KernelVariant::kLinearSoftplus, 1);
  const auto glu = count(KernelVariant::kGlu, 1);
  const auto aoglu = count(KernelVariant::kAoglu, 1);
  const auto aoglu3 = count(KernelVariant::kAoglu, 3);
  report.items.push_back({"GLU kernel = 2 x linear kernel", glu == 2 * lin,
                          std::to_string(glu) + " vs " + std::to_string(lin)});
  report.items.push_back({"AOGLU (r = n/4) = 0.75 x GLU", 4 * aoglu == 3 * glu,
                          std::to_string(aoglu) + " vs " + std::to_string(glu)});
  report.items.push_back({"3x AOGLU kernel count", aoglu3 == 22528, std::to_string(aoglu3)});

  bool closed_ok = true;
  std::string detail;
  for (int variant = 0; variant < 3; ++variant) {
    ModelConfig c;
    c.vocab_size = 20 + 7 * variant;
    c.d_model = 16 << variant;
    c.n_heads = 2 << variant;
    c.n_layers = 1 + variant;
    c.ffn_dim = 24 * (variant + 1);
    c.max_len = 32 + variant;
    c.num_classes = variant == 2 ? 2 : 2 + variant;
    c.pooling = variant == 1 ? Pooling::kCls : Pooling::kMean;
    c.task = variant == 2 ? TaskKind::kMatch : TaskKind::kClassify;
    c.kernel = make_spec(KernelVariant::kOglu, 1 + variant, c.head_dim());
    const ParamAccount acct = count_params(c);
    const auto expected_kernel =
        static_cast<std::uint64_t>(c.n_layers) * kernel_layer_closed_form(c.kernel, c.n_heads, true);
    const bool ok = acct.base_params == base_param_closed_form(c) &&
                    acct.kernel_params == expected_kernel;
    closed_ok = closed_ok && ok;
    detail += (detail.empty() ? "" : ", ") + std::to_string(acct.base_params) + "+" +
              std::to_string(acct.kernel_params);
  }
  report.items.push_back({"parameter counts match closed forms (3 configs)", closed_ok, detail});

  ParamAccount edge;
  edge.base_params = 1000;
  edge.kernel_params = 100;
  edge.ratio = 0.10;
  ParamAccount below = edge;
  below.kernel_params = 99;
  below.ratio = 0.099;
  const bool gate = !budget_check(edge).pass && budget_check(below).pass;
  report.items.push_back({"budget gate rejects ratio 0.10", gate, "strict inequality"});
}

}  // namespace

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double stddev) {
  std::vector<T> values(numel(shape));
  for (T& v : values) v = static_cast<T>(stddev * rng.normal());
  return Tensor<T>(shape, std::move(values));
}

template Tensor<float> random_tensor<float>(const Shape&, Rng&, double);
template Tensor<double> random_tensor<double>(const Shape&, Rng&, double);

std::uint64_t base_param_closed_form(const ModelConfig& c) {
  const std::uint64_t d = static_cast<std::uint64_t>(c.d_model);
  const std::uint64_t f = static_cast<std::uint64_t>(c.ffn_dim);
  const std::uint64_t cls = c.pooling == Pooling::kCls ? 1 : 0;
  std::uint64_t total = static_cast<std::uint64_t>(c.vocab_size) * d;
  total += (static_cast<std::uint64_t>(c.max_len) + cls) * d + cls * d;
  total += static_cast<std::uint64_t>(c.n_layers) * (4 * d + 4 * d * d + 2 * d * f + f + d);
  total += 2 * d;
  if (c.task == TaskKind::kClassify) {
    total += d * static_cast<std::uint64_t>(c.num_classes) + static_cast<std::uint64_t>(c.num_classes);
  } else {
    const std::uint64_t h = static_cast<std::uint64_t>(c.match_hidden);
    total += 4 * d * h + h + 2 * h + 2;
  }
  return total;
}

std::uint64_t kernel_layer_closed_form(const KernelSpec& spec, int n_heads, bool share_qk) {
  const std::uint64_t n = static_cast<std::uint64_t>(spec.head_dim);
  const std::uint64_t r = static_cast<std::uint64_t>(spec.effective_gate_rank());
  std::uint64_t per_head = 0;
  for (int layer = 0; layer < spec.depth; ++layer) {
    if (spec.variant == KernelVariant::kLinearSoftplus) {
      per_head += n * n;
    } else if (spec.layer_low_rank(layer)) {
      per_head += n * n + 2 * n * r;
    } else {
      per_head += 2 * n * n;
    }
  }
  return per_head * static_cast<std::uint64_t>(n_heads) * (share_qk ? 1 : 2);
}

double oracle_trial(const KernelSpec& spec, std::size_t length, std::size_t value_dim, Rng& rng) {
  NoGradGuard no_grad;
  const std::size_t n = static_cast<std::size_t>(spec.head_dim);
  const auto params = init_kernel_params<double>(spec, rng);
  const auto q = random_tensor<double>({length, n}, rng);
  const auto k = random_tensor<double>({length, n}, rng);
  const auto v = random_tensor<double>({length, value_dim}, rng);
  std::vector<bool> real(length, true);
  for (std::size_t j = 1; j < length; ++j) real[j] = rng.uniform01() > 0.2;
  const PadMask mask(std::move(real));
  const auto qf = kernel_stack_forward(q, spec, params);
  const auto kf = kernel_stack_forward(k, spec, params);
  return max_abs_diff(kernel_attention_linear(qf, kf, v, mask, 0.0),
                      kernel_attention_quadratic(qf, kf, v, mask));
}

bool VerifyReport::passed() const {
  return std::all_of(items.begin(), items.end(), [](const VerifyItem& i) { return i.pass; });
}

std::string VerifyReport::format() const {
  std::ostringstream os;
  std::size_t passed_count = 0;
  for (const auto& item : items) {
    os << (item.pass ? "PASS  " : "FAIL  ") << item.name;
    if (!item.detail.empty()) os << "  [" << item.detail << "]";
    os << '\n';
    passed_count += item.pass;
  }
  os << passed_count << "/" << items.size() << " checks passed\n";
  return os.str();
}

VerifyReport run_verify(const VerifyOptions& options) {
  VerifyReport report;
  check_oracle(report, options);
  check_positivity(report, options);
  check_orthogonal_init(report, options);
  check_aoglu_materialization(report, options);
  check_penalty_gradient(report, options);
  check_model_gradients(report, options);
  check_param_counts(report);
  return report;
}

}  // namespace ffattn
