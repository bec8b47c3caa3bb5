// Copyright 2026 The lidsap Authors
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

// Layer primitives with hand-written adjoints. Everything is templated on the
// scalar so the same code runs in float for training and double for gradient
// checks. Reductions accumulate in double.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/random.hpp"
#include "lidsap/tensor.hpp"

namespace lidsap {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// Depthwise convolution over time: one K-tap kernel per channel, stride 1,
// dilation 1, symmetric zero padding of (K-1)/2 so T is preserved.

template <typename T>
struct DepthwiseGrads {
  Tensor<T> x;
  Tensor<T> kernels;
};

inline void check_depthwise(const Ncw& s, const Shape& kshape) {
  if (kshape.size() != 2) throw ShapeError("depthwise kernels must be C x K");
  if (kshape[0] != s.c) {
    throw ShapeError("depthwise channel mismatch: input " + std::to_string(s.c) +
                     " vs kernels " + std::to_string(kshape[0]));
  }
  if (kshape[1] % 2 == 0) {
    throw std::invalid_argument("depthwise kernel size must be odd, got " +
                                std::to_string(kshape[1]));
  }
}

template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernels) {
  const Ncw s = as_ncw(x, "depthwise_conv1d");
  check_depthwise(s, kernels.shape());
  const std::size_t k_size = kernels.dim(1);
  const long half = static_cast<long>(k_size / 2);
  const long len = static_cast<long>(s.t);
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* in = x.data().data() + (n * s.c + c) * s.t;
      const T* w = kernels.data().data() + c * k_size;
      T* o = out.data().data() + (n * s.c + c) * s.t;
      for (long t = 0; t < len; ++t) {
        const long k_lo = std::max(0L, half - t);
        const long k_hi = std::min(static_cast<long>(k_size), len + half - t);
        double acc = 0.0;
        for (long k = k_lo; k < k_hi; ++k) acc += static_cast<double>(in[t + k - half]) * w[k];
        o[t] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

template <typename T>
DepthwiseGrads<T> depthwise_conv1d_backward(const Tensor<T>& x, const Tensor<T>& kernels,
                                            const Tensor<T>& grad_out) {
  const Ncw s = as_ncw(x, "depthwise_conv1d_backward");
  check_depthwise(s, kernels.shape());
  x.require_same_shape(grad_out, "depthwise_conv1d_backward");
  const std::size_t k_size = kernels.dim(1);
  const long half = static_cast<long>(k_size / 2);
  const long len = static_cast<long>(s.t);
  DepthwiseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(kernels.shape())};
  std::vector<double> gk(kernels.size(), 0.0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* in = x.data().data() + (n * s.c + c) * s.t;
      const T* go = grad_out.data().data() + (n * s.c + c) * s.t;
      const T* w = kernels.data().data() + c * k_size;
      T* gx = g.x.data().data() + (n * s.c + c) * s.t;
      // grad_x[u] = sum_k go[u - k + half] * w[k]
      for (long u = 0; u < len; ++u) {
        double acc = 0.0;
        for (long k = 0; k < static_cast<long>(k_size); ++k) {
          const long t = u - k + half;
          if (t >= 0 && t < len) acc += static_cast<double>(go[t]) * w[k];
        }
        gx[u] = static_cast<T>(acc);
      }
      for (long k = 0; k < static_cast<long>(k_size); ++k) {
        double acc = 0.0;
        const long t_lo = std::max(0L, half - k);
        const long t_hi = std::min(len, len + half - k);
        for (long t = t_lo; t < t_hi; ++t) acc += static_cast<double>(go[t]) * in[t + k - half];
        gk[c * k_size + k] += acc;
      }
    }
  }
  for (std::size_t i = 0; i < gk.size(); ++i) g.kernels[i] = static_cast<T>(gk[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Pointwise (1x1) convolution: per-frame matrix product mixing channels.

template <typename T>
struct PointwiseGrads {
  Tensor<T> x;
  Tensor<T> weights;
  std::optional<Tensor<T>> bias;
};

inline void check_pointwise(const Ncw& s, const Shape& wshape, const Shape* bshape) {
  if (wshape.size() != 2) throw ShapeError("pointwise weights must be Cout x Cin");
  if (wshape[1] != s.c) {
    throw ShapeError("pointwise shape mismatch: input channels " + std::to_string(s.c) +
                     " vs weights " + shape_string(wshape));
  }
  if (bshape && (bshape->size() != 1 || (*bshape)[0] != wshape[0])) {
    throw ShapeError("pointwise bias must have Cout entries");
  }
}

template <typename T>
Tensor<T> pointwise_conv1d(const Tensor<T>& x, const Tensor<T>& weights,
                           const Tensor<T>* bias = nullptr) {
  const Ncw s = as_ncw(x, "pointwise_conv1d");
  check_pointwise(s, weights.shape(), bias ? &bias->shape() : nullptr);
  const std::size_t c_out = weights.dim(0);
  Tensor<T> out = x.rank() == 2 ? Tensor<T>({c_out, s.t}) : Tensor<T>({s.n, c_out, s.t});
  std::vector<double> acc(s.t);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* in = x.data().data() + n * s.c * s.t;
    T* o = out.data().data() + n * c_out * s.t;
    for (std::size_t co = 0; co < c_out; ++co) {
      const double b0 = bias ? static_cast<double>((*bias)[co]) : 0.0;
      std::fill(acc.begin(), acc.end(), b0);
      const T* w = weights.data().data() + co * s.c;
      for (std::size_t ci = 0; ci < s.c; ++ci) {
        const double wv = w[ci];
        const T* row = in + ci * s.t;
        for (std::size_t t = 0; t < s.t; ++t) acc[t] += wv * row[t];
      }
      for (std::size_t t = 0; t < s.t; ++t) o[co * s.t + t] = static_cast<T>(acc[t]);
    }
  }
  return out;
}

template <typename T>
PointwiseGrads<T> pointwise_conv1d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                                            const Tensor<T>& grad_out, bool with_bias) {
  const Ncw s = as_ncw(x, "pointwise_conv1d_backward");
  check_pointwise(s, weights.shape(), nullptr);
  const std::size_t c_out = weights.dim(0);
  const Ncw so = as_ncw(grad_out, "pointwise_conv1d_backward");
  if (so.n != s.n || so.c != c_out || so.t != s.t) {
    throw ShapeError("pointwise_conv1d_backward: grad_out shape " + shape_string(grad_out.shape()));
  }
  PointwiseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), std::nullopt};
  std::vector<double> gw(weights.size(), 0.0);
  std::vector<double> gb(c_out, 0.0);
  std::vector<double> acc(s.t);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* in = x.data().data() + n * s.c * s.t;
    const T* go = grad_out.data().data() + n * c_out * s.t;
    T* gx = g.x.data().data() + n * s.c * s.t;
    for (std::size_t ci = 0; ci < s.c; ++ci) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t co = 0; co < c_out; ++co) {
        const double wv = weights[co * s.c + ci];
        const T* grow = go + co * s.t;
        for (std::size_t t = 0; t < s.t; ++t) acc[t] += wv * grow[t];
      }
      for (std::size_t t = 0; t < s.t; ++t) gx[ci * s.t + t] = static_cast<T>(acc[t]);
    }
    for (std::size_t co = 0; co < c_out; ++co) {
      const T* grow = go + co * s.t;
      double bsum = 0.0;
      for (std::size_t t = 0; t < s.t; ++t) bsum += grow[t];
      gb[co] += bsum;
      for (std::size_t ci = 0; ci < s.c; ++ci) {
        const T* row = in + ci * s.t;
        double d = 0.0;
        for (std::size_t t = 0; t < s.t; ++t) d += static_cast<double>(grow[t]) * row[t];
        gw[co * s.c + ci] += d;
      }
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) g.weights[i] = static_cast<T>(gw[i]);
  if (with_bias) {
    Tensor<T> b({c_out});
    for (std::size_t i = 0; i < c_out; ++i) b[i] = static_cast<T>(gb[i]);
    g.bias = std::move(b);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, T) per channel. Optional per-item valid lengths
// restrict statistics to unpadded frames; padded frames pass through as zero.

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : gamma({channels}, T{1}),
        beta({channels}, T{0}),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}) {}

  std::size_t channels() const { return gamma.size(); }
};

/// Per-channel batch statistics captured by a train-mode forward.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
  std::size_t count = 0;
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kEval;
  Tensor<T> x_hat;
  std::vector<double> inv_std;
  std::vector<std::size_t> lengths;
  BatchStats stats;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> x;
  Tensor<T> gamma;
  Tensor<T> beta;
};

namespace detail {
inline std::vector<std::size_t> resolve_lengths(const Ncw& s, std::span<const std::size_t> lengths) {
  if (lengths.empty()) return std::vector<std::size_t>(s.n, s.t);
  if (lengths.size() != s.n) throw ShapeError("lengths must have one entry per batch item");
  std::vector<std::size_t> out(lengths.begin(), lengths.end());
  for (auto l : out) {
    if (l == 0 || l > s.t) throw ShapeError("valid length out of range");
  }
  return out;
}
}  // namespace detail

/// Running-stat update with the state's momentum; running_var takes the
/// unbiased batch variance.
template <typename T>
void update_running_stats(BatchNormState<T>& state, const BatchStats& stats) {
  const double m = state.momentum;
  const double unbias = stats.count > 1 ? static_cast<double>(stats.count) / (stats.count - 1) : 1.0;
  for (std::size_t c = 0; c < state.channels(); ++c) {
    state.running_mean[c] = static_cast<T>((1.0 - m) * state.running_mean[c] + m * stats.mean[c]);
    state.running_var[c] =
        static_cast<T>((1.0 - m) * state.running_var[c] + m * stats.var[c] * unbias);
  }
}

/// Forward pass that leaves the state untouched. In train mode the batch
/// statistics land in `cache->stats` (cache is required then).
template <typename T>
Tensor<T> batch_norm_1d_apply(const Tensor<T>& x, const BatchNormState<T>& state, Mode mode,
                              BatchNormCache<T>* cache,
                              std::span<const std::size_t> lengths = {}) {
  const Ncw s = as_ncw(x, "batch_norm_1d");
  if (state.channels() != s.c) throw ShapeError("batch_norm_1d: channel mismatch");
  const auto lens = detail::resolve_lengths(s, lengths);
  std::size_t count = 0;
  for (auto l : lens) count += l;

  std::vector<double> mean(s.c), var(s.c), inv_std(s.c);
  if (mode == Mode::kTrain) {
    if (count < 2) {
      throw std::invalid_argument("batch_norm_1d: train mode needs at least 2 values per channel");
    }
    if (!cache) throw std::invalid_argument("batch_norm_1d: train mode requires a cache");
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* row = x.data().data() + (n * s.c + c) * s.t;
        for (std::size_t t = 0; t < lens[n]; ++t) sum += row[t];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* row = x.data().data() + (n * s.c + c) * s.t;
        for (std::size_t t = 0; t < lens[n]; ++t) {
          const double d = row[t] - mu;
          sq += d * d;
        }
      }
      mean[c] = mu;
      var[c] = sq / static_cast<double>(count);
    }
  } else {
    for (std::size_t c = 0; c < s.c; ++c) {
      mean[c] = state.running_mean[c];
      var[c] = state.running_var[c];
    }
  }
  for (std::size_t c = 0; c < s.c; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);

  Tensor<T> out(x.shape());
  Tensor<T> x_hat;
  if (cache) x_hat = Tensor<T>(x.shape());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * s.t;
      const double g = state.gamma[c];
      const double b = state.beta[c];
      for (std::size_t t = 0; t < lens[n]; ++t) {
        const double xh = (x[base + t] - mean[c]) * inv_std[c];
        if (cache) x_hat[base + t] = static_cast<T>(xh);
        out[base + t] = static_cast<T>(g * xh + b);
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->lengths = lens;
    if (mode == Mode::kTrain) cache->stats = BatchStats{std::move(mean), std::move(var), count};
  }
  return out;
}

/// Forward pass; in train mode also folds the batch statistics into the
/// running estimates.
template <typename T>
Tensor<T> batch_norm_1d(const Tensor<T>& x, BatchNormState<T>& state, Mode mode,
                        BatchNormCache<T>* cache = nullptr,
                        std::span<const std::size_t> lengths = {}) {
  BatchNormCache<T> local;
  if (mode == Mode::kTrain && !cache) cache = &local;
  Tensor<T> out = batch_norm_1d_apply(x, state, mode, cache, lengths);
  if (mode == Mode::kTrain) update_running_stats(state, cache->stats);
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_1d_backward(const BatchNormCache<T>& cache,
                                         const BatchNormState<T>& state,
                                         const Tensor<T>& grad_out) {
  const Ncw s = as_ncw(grad_out, "batch_norm_1d_backward");
  if (cache.x_hat.shape() != grad_out.shape()) {
    throw std::logic_error("batch_norm_1d_backward: cache does not match grad_out");
  }
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>(state.gamma.shape()),
                      Tensor<T>(state.beta.shape())};
  const auto& lens = cache.lengths;
  std::size_t count = 0;
  for (auto l : lens) count += l;
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.t;
      for (std::size_t t = 0; t < lens[n]; ++t) {
        sum_g += grad_out[base + t];
        sum_gx += static_cast<double>(grad_out[base + t]) * cache.x_hat[base + t];
      }
    }
    g.beta[c] = static_cast<T>(sum_g);
    g.gamma[c] = static_cast<T>(sum_gx);
    const double scale = state.gamma[c] * cache.inv_std[c];
    const double inv_m = 1.0 / static_cast<double>(count);
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.t;
      for (std::size_t t = 0; t < lens[n]; ++t) {
        double d;
        if (cache.mode == Mode::kTrain) {
          d = scale * (grad_out[base + t] - inv_m * sum_g - cache.x_hat[base + t] * inv_m * sum_gx);
        } else {
          d = scale * grad_out[base + t];
        }
        g.x[base + t] = static_cast<T>(d);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise maps.

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

/// Gradient through ReLU given its output (y > 0 iff x > 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  y.require_same_shape(grad_out, "relu_backward");
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
Tensor<T> tanh_map(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

/// Gradient through tanh given its output.
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  y.require_same_shape(grad_out, "tanh_backward");
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * (T{1} - y[i] * y[i]);
  return g;
}

/// Numerically stable softmax (max subtracted before exponentiation).
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += e[i];
  }
  std::vector<T> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
  return out;
}

template <typename T>
std::vector<T> softmax_backward(std::span<const T> probs, std::span<const T> grad_out) {
  if (probs.size() != grad_out.size()) throw ShapeError("softmax_backward: length mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += static_cast<double>(probs[i]) * grad_out[i];
  std::vector<T> g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    g[i] = static_cast<T>(probs[i] * (grad_out[i] - dot));
  }
  return g;
}

/// Inverted dropout. `mask` receives the per-element multiplier (0 or
/// 1/(1-p)) so backward can replay it.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng* rng, Mode mode, Tensor<T>* mask = nullptr) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) {
    if (mask) *mask = Tensor<T>(x.shape(), T{1});
    return x;
  }
  if (!rng) throw std::invalid_argument("dropout: train mode with p > 0 requires an rng");
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> m(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = keep(*rng) ? scale : T{0};
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out) {
  mask.require_same_shape(grad_out, "dropout_backward");
  Tensor<T> g(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

// ---------------------------------------------------------------------------
// Affine map y = W x + b on a single vector.

template <typename T>
struct LinearGrads {
  Tensor<T> x;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 1 || weights.rank() != 2 || bias.rank() != 1 || weights.dim(1) != x.dim(0) ||
      bias.dim(0) != weights.dim(0)) {
    throw ShapeError("linear: shapes x " + shape_string(x.shape()) + ", W " +
                     shape_string(weights.shape()) + ", b " + shape_string(bias.shape()));
  }
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  Tensor<T> y({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += static_cast<double>(weights[o * in_dim + i]) * x[i];
    y[o] = static_cast<T>(acc);
  }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weights,
                               const Tensor<T>& grad_out) {
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  if (grad_out.size() != out_dim || x.size() != in_dim) throw ShapeError("linear_backward");
  LinearGrads<T> g{Tensor<T>({in_dim}), Tensor<T>(weights.shape()), grad_out};
  for (std::size_t i = 0; i < in_dim; ++i) {
    double acc = 0.0;
    for (std::size_t o = 0; o < out_dim; ++o) acc += static_cast<double>(weights[o * in_dim + i]) * grad_out[o];
    g.x[i] = static_cast<T>(acc);
  }
  for (std::size_t o = 0; o < out_dim; ++o) {
    for (std::size_t i = 0; i < in_dim; ++i) {
      g.weights[o * in_dim + i] = grad_out[o] * x[i];
    }
  }
#ifdef LIDSAP_CORRUPT_LINEAR_BACKWARD
  // Harness-sensitivity builds only: a wrong adjoint the gradient check must catch.
  for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] *= T{1.1};
#endif
  return g;
}

}  // namespace lidsap
