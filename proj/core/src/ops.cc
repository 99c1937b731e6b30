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

#include "ffattn/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "ffattn/errors.h"

namespace ffattn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
using Sinks = std::span<std::vector<T>* const>;

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(a.shape()));
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a binary elementwise op under suffix broadcasting.
template <typename T>
Shape broadcast_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) +
                       " with " + shape_string(b.shape()));
}

// out[i] = f(a[i % na], b[i % nb]); derivatives da/db receive (x, y).
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = numel(shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const auto& av = *a.storage();
  const auto& bv = *b.storage();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  auto as = a.storage();
  auto bs = b.storage();
  return Tensor<T>::from_op(std::move(shape), std::move(out), {&a, &b},
                            [as, bs, da, db](std::span<const T> g, Sinks<T> sinks) {
                              const auto& x = *as;
                              const auto& y = *bs;
                              const std::size_t nx = x.size();
                              const std::size_t ny = y.size();
                              if (sinks[0]) {
                                auto& ga = *sinks[0];
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  ga[i % nx] += g[i] * da(x[i % nx], y[i % ny]);
                              }
                              if (sinks[1]) {
                                auto& gb = *sinks[1];
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  gb[i % ny] += g[i] * db(x[i % nx], y[i % ny]);
                              }
                            });
}

// out[i] = f(a[i]); df receives x.
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df) {
  const auto& av = *a.storage();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto as = a.storage();
  return Tensor<T>::from_op(a.shape(), std::move(out), {&a},
                            [as, df](std::span<const T> g, Sinks<T> sinks) {
                              const auto& x = *as;
                              auto& ga = *sinks[0];
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i]);
                            });
}

template <typename T>
T softplus_scalar(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  MutMap<T>(out.data(), m, n).noalias() =
      ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);
  auto as = a.storage();
  auto bs = b.storage();
  return Tensor<T>::from_op(
      {m, n}, std::move(out), {&a, &b}, [as, bs, m, k, n](std::span<const T> g, Sinks<T> sinks) {
        ConstMap<T> gm(g.data(), m, n);
        if (sinks[0]) {
          MutMap<T>(sinks[0]->data(), m, k).noalias() +=
              gm * ConstMap<T>(bs->data(), k, n).transpose();
        }
        if (sinks[1]) {
          MutMap<T>(sinks[1]->data(), k, n).noalias() +=
              ConstMap<T>(as->data(), m, k).transpose() * gm;
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<T> out(m * n);
  MutMap<T>(out.data(), n, m) = ConstMap<T>(a.data().data(), m, n).transpose();
  return Tensor<T>::from_op({n, m}, std::move(out), {&a},
                            [m, n](std::span<const T> g, Sinks<T> sinks) {
                              MutMap<T>(sinks[0]->data(), m, n) +=
                                  ConstMap<T>(g.data(), n, m).transpose();
                            });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
  }
  return Tensor<T>::from_op(std::move(shape), a.to_vector(), {&a},
                            [](std::span<const T> g, Sinks<T> sinks) {
                              auto& ga = *sinks[0];
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return factor * x; }, [factor](T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(a, [value](T x) { return x + value; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x) { return T(1) / x; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::abs(x); },
      [](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return unary(a, softplus_scalar<T>, sigmoid_scalar<T>);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, sigmoid_scalar<T>, [](T x) {
    const T s = sigmoid_scalar(x);
    return s * (T(1) - s);
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  return unary(a, gelu_scalar<T>, gelu_grad<T>);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  const std::size_t n = a.numel();
  return Tensor<T>::from_op({}, {total}, {&a}, [n](std::span<const T> g, Sinks<T> sinks) {
    auto& ga = *sinks[0];
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  const std::size_t n = a.numel();
  const T inv = T(1) / static_cast<T>(n);
  return Tensor<T>::from_op({}, {total * inv}, {&a},
                            [n, inv](std::span<const T> g, Sinks<T> sinks) {
                              auto& ga = *sinks[0];
                              for (std::size_t i = 0; i < n; ++i) ga[i] += g[0] * inv;
                            });
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& a) {
  require_matrix(a, "row_sum");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<T> out(m, T(0));
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
    out[i] = s;
  }
  return Tensor<T>::from_op({m, 1}, std::move(out), {&a},
                            [m, n](std::span<const T> g, Sinks<T> sinks) {
                              auto& ga = *sinks[0];
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
                            });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto x = a.data();
  auto probs = std::make_shared<std::vector<T>>(m * n);
  auto& p = *probs;
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    const T top = *std::max_element(row, row + n);
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      p[i * n + j] = std::exp(row[j] - top);
      total += p[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= total;
  }
  std::vector<T> out = p;
  return Tensor<T>::from_op({m, n}, std::move(out), {&a},
                            [probs, m, n](std::span<const T> g, Sinks<T> sinks) {
                              const auto& pv = *probs;
                              auto& ga = *sinks[0];
                              for (std::size_t i = 0; i < m; ++i) {
                                T dot = T(0);
                                for (std::size_t j = 0; j < n; ++j)
                                  dot += g[i * n + j] * pv[i * n + j];
                                for (std::size_t j = 0; j < n; ++j)
                                  ga[i * n + j] += pv[i * n + j] * (g[i * n + j] - dot);
                              }
                            });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t b = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(b) + " rows");
  }
  const auto x = logits.data();
  auto probs = std::make_shared<std::vector<T>>(b * c);
  std::vector<int> targets(labels.begin(), labels.end());
  T total = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      throw DataError("cross_entropy: label " + std::to_string(targets[i]) + " outside [0, " +
                      std::to_string(c) + ")");
    }
    const T* row = x.data() + i * c;
    const T top = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - top);
    const T log_z = top + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - log_z);
    total += log_z - row[targets[i]];
  }
  const T inv = T(1) / static_cast<T>(b);
  return Tensor<T>::from_op({}, {total * inv}, {&logits},
                            [probs, targets, b, c, inv](std::span<const T> g, Sinks<T> sinks) {
                              auto& ga = *sinks[0];
                              const T s = g[0] * inv;
                              for (std::size_t i = 0; i < b; ++i) {
                                for (std::size_t j = 0; j < c; ++j) {
                                  T d = (*probs)[i * c + j];
                                  if (static_cast<int>(j) == targets[i]) d -= T(1);
                                  ga[i * c + j] += s * d;
                                }
                              }
                            });
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          T eps) {
  require_matrix(x, "layer_norm_rows");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm_rows: gain " + shape_string(gain.shape()) + " and bias " +
                         shape_string(bias.shape()) + " must be [" + std::to_string(n) + "]");
  }
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  auto normed = std::make_shared<std::vector<T>>(m * n);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * is;
      (*normed)[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  auto gs = gain.storage();
  return Tensor<T>::from_op(
      {m, n}, std::move(out), {&x, &gain, &bias},
      [normed, inv_std, gs, m, n](std::span<const T> g, Sinks<T> sinks) {
        const auto& h = *normed;
        const auto& gamma = *gs;
        if (sinks[0]) {
          auto& gx = *sinks[0];
          for (std::size_t i = 0; i < m; ++i) {
            T mean_dh = T(0);
            T mean_dh_h = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = g[i * n + j] * gamma[j];
              mean_dh += dh;
              mean_dh_h += dh * h[i * n + j];
            }
            mean_dh /= static_cast<T>(n);
            mean_dh_h /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = g[i * n + j] * gamma[j];
              gx[i * n + j] += (*inv_std)[i] * (dh - mean_dh - h[i * n + j] * mean_dh_h);
            }
          }
        }
        if (sinks[1]) {
          auto& gg = *sinks[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * h[i * n + j];
        }
        if (sinks[2]) {
          auto& gb = *sinks[2];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> weights) {
  require_matrix(x, "scale_rows");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (weights.size() != m) {
    throw DimensionError("scale_rows: " + std::to_string(weights.size()) + " weights for shape " +
                         shape_string(x.shape()));
  }
  std::vector<T> w(weights.begin(), weights.end());
  const auto xv = x.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * w[i];
  return Tensor<T>::from_op({m, n}, std::move(out), {&x},
                            [w, m, n](std::span<const T> g, Sinks<T> sinks) {
                              auto& gx = *sinks[0];
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j)
                                  gx[i * n + j] += g[i * n + j] * w[i];
                            });
}

template <typename T>
Tensor<T> scale_cols(const Tensor<T>& x, std::span<const T> weights) {
  require_matrix(x, "scale_cols");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (weights.size() != n) {
    throw DimensionError("scale_cols: " + std::to_string(weights.size()) + " weights for shape " +
                         shape_string(x.shape()));
  }
  std::vector<T> w(weights.begin(), weights.end());
  const auto xv = x.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * w[j];
  return Tensor<T>::from_op({m, n}, std::move(out), {&x},
                            [w, m, n](std::span<const T> g, Sinks<T> sinks) {
                              auto& gx = *sinks[0];
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j)
                                  gx[i * n + j] += g[i * n + j] * w[j];
                            });
}

template <typename T>
Tensor<T> div_rows(const Tensor<T>& x, const Tensor<T>& denom) {
  require_matrix(x, "div_rows");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (denom.numel() != m || (denom.rank() == 2 && denom.cols() != 1)) {
    throw DimensionError("div_rows: denominator " + shape_string(denom.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
  const auto xv = x.data();
  const auto dv = denom.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / dv[i];
  auto xs = x.storage();
  auto ds = denom.storage();
  return Tensor<T>::from_op({m, n}, std::move(out), {&x, &denom},
                            [xs, ds, m, n](std::span<const T> g, Sinks<T> sinks) {
                              const auto& xv = *xs;
                              const auto& dv = *ds;
                              if (sinks[0]) {
                                auto& gx = *sinks[0];
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j)
                                    gx[i * n + j] += g[i * n + j] / dv[i];
                              }
                              if (sinks[1]) {
                                auto& gd = *sinks[1];
                                for (std::size_t i = 0; i < m; ++i) {
                                  T acc = T(0);
                                  for (std::size_t j = 0; j < n; ++j)
                                    acc += g[i * n + j] * xv[i * n + j];
                                  gd[i] -= acc / (dv[i] * dv[i]);
                                }
                              }
                            });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const auto xv = x.data();
  std::vector<T> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
  return Tensor<T>::from_op({m, count}, std::move(out), {&x},
                            [m, n, begin, count](std::span<const T> g, Sinks<T> sinks) {
                              auto& gx = *sinks[0];
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < count; ++j)
                                  gx[i * n + begin + j] += g[i * count + j];
                            });
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto pv = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  return Tensor<T>::from_op({m, total}, std::move(out), parts,
                            [widths, m, total](std::span<const T> g, Sinks<T> sinks) {
                              std::size_t off = 0;
                              for (std::size_t k = 0; k < widths.size(); ++k) {
                                const std::size_t w = widths[k];
                                if (sinks[k]) {
                                  auto& gp = *sinks[k];
                                  for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < w; ++j)
                                      gp[i * w + j] += g[i * total + off + j];
                                }
                                off += w;
                              }
                            });
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column count mismatch " +
                           shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    sizes.push_back(p.numel());
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor<T>::from_op({rows, n}, std::move(out), parts,
                            [sizes](std::span<const T> g, Sinks<T> sinks) {
                              std::size_t off = 0;
                              for (std::size_t k = 0; k < sizes.size(); ++k) {
                                if (sinks[k]) {
                                  auto& gp = *sinks[k];
                                  for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
                                }
                                off += sizes[k];
                              }
                            });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t v = table.rows();
  const std::size_t d = table.cols();
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  const auto tv = table.data();
  std::vector<T> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= v) {
      throw DataError("token id " + std::to_string(idx[i]) + " outside vocabulary of size " +
                      std::to_string(v));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  return Tensor<T>::from_op({idx.size(), d}, std::move(out), {&table},
                            [idx, d](std::span<const T> g, Sinks<T> sinks) {
                              auto& gt = *sinks[0];
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                const std::size_t row = static_cast<std::size_t>(idx[i]);
                                for (std::size_t j = 0; j < d; ++j)
                                  gt[row * d + j] += g[i * d + j];
                              }
                            });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform01() < rate ? T(0) : keep_scale;
  const auto xv = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return Tensor<T>::from_op(x.shape(), std::move(out), {&x},
                            [mask = std::move(mask)](std::span<const T> g, Sinks<T> sinks) {
                              auto& gx = *sinks[0];
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                            });
}

#define FFATTN_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                       \
  template Tensor<T> exp(const Tensor<T>&);                                                 \
  template Tensor<T> log(const Tensor<T>&);                                                 \
  template Tensor<T> square(const Tensor<T>&);                                              \
  template Tensor<T> abs(const Tensor<T>&);                                                 \
  template Tensor<T> softplus(const Tensor<T>&);                                            \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> gelu(const Tensor<T>&);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> row_sum(const Tensor<T>&);                                             \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                        \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                 \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                     T);                                                    \
  template Tensor<T> scale_rows(const Tensor<T>&, std::span<const T>);                      \
  template Tensor<T> scale_cols(const Tensor<T>&, std::span<const T>);                      \
  template Tensor<T> div_rows(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                               \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int32_t>);          \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&);

FFATTN_INSTANTIATE_OPS(float)
FFATTN_INSTANTIATE_OPS(double)

#undef FFATTN_INSTANTIATE_OPS

}  // namespace ffattn
