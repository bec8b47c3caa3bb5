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

// Self-attentive pooling decoder.
//
//   h_t = tanh(W x_t + b)            hidden, d_att per frame
//   a_t = mu . h_t                   frame score against the context vector
//   w   = softmax(a_1 .. a_Tvalid)   frames past valid_len are excluded
//   e   = sum_t w_t x_t              utterance embedding
//   logits = head_W e + head_b

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/ops.hpp"
#include "lidsap/random.hpp"
#include "lidsap/tensor.hpp"

namespace lidsap {

struct SapConfig {
  std::size_t channels = 512;       // C, the encoder's out_channels
  std::size_t attention_dim = 256;  // d_att
  std::size_t n_classes = 0;

  void validate() const {
    if (channels == 0 || attention_dim == 0 || n_classes == 0) {
      throw std::invalid_argument("invalid SAP config: channels, attention_dim and n_classes must be positive");
    }
  }
  friend bool operator==(const SapConfig&, const SapConfig&) = default;
};

template <typename T>
struct SapParams {
  using value_type = T;
  Tensor<T> W;       // d_att x C
  Tensor<T> b;       // d_att
  Tensor<T> mu;      // d_att
  Tensor<T> head_W;  // n_classes x C
  Tensor<T> head_b;  // n_classes

  std::size_t channels() const { return W.dim(1); }
  std::size_t attention_dim() const { return W.dim(0); }
  std::size_t n_classes() const { return head_W.dim(0); }
};

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, SapParams<typename std::remove_const_t<P>::value_type>>
void visit_tensors(P& p, F&& f, const std::string& prefix = "sap") {
  f(prefix + ".W", p.W, true);
  f(prefix + ".b", p.b, true);
  f(prefix + ".mu", p.mu, true);
  f(prefix + ".head_W", p.head_W, true);
  f(prefix + ".head_b", p.head_b, true);
}

template <typename T>
SapParams<T> allocate_sap(const SapConfig& cfg) {
  cfg.validate();
  return SapParams<T>{Tensor<T>({cfg.attention_dim, cfg.channels}), Tensor<T>({cfg.attention_dim}),
                      Tensor<T>({cfg.attention_dim}), Tensor<T>({cfg.n_classes, cfg.channels}),
                      Tensor<T>({cfg.n_classes})};
}

/// W ~ N(0, 1/C), mu ~ N(0, 1/d_att), biases zero. The head starts at zero so
/// the initial posterior is uniform over classes.
template <typename T>
SapParams<T> build_sap(const SapConfig& cfg, std::uint64_t seed) {
  SapParams<T> p = allocate_sap<T>(cfg);
  Rng rng = derive_rng(seed, {stream::kInit, 1});
  std::normal_distribution<double> dw(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.channels)));
  for (auto& v : p.W.storage()) v = static_cast<T>(dw(rng));
  std::normal_distribution<double> dm(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.attention_dim)));
  for (auto& v : p.mu.storage()) v = static_cast<T>(dm(rng));
  return p;
}

template <typename T>
SapParams<T> zeros_like(const SapParams<T>& p) {
  SapParams<T> z = p;
  visit_tensors(z, [](const std::string&, Tensor<T>& t, bool) { t.fill(T{0}); });
  return z;
}

template <typename T>
struct SapForwardState {
  Tensor<T> hidden;        // T_valid x d_att
  std::vector<T> scores;   // a_t, length T_valid
  std::vector<T> weights;  // w_t, length T_valid
  Tensor<T> embedding;     // C
  std::size_t valid_len = 0;
  std::size_t total_len = 0;
};

/// Pools C x T frame features; only the first `valid_len` frames take part.
template <typename T>
SapForwardState<T> sap_forward(const Tensor<T>& x, const SapParams<T>& p, std::size_t valid_len) {
  if (x.rank() != 2) throw ShapeError("sap_forward: x must be C x T");
  const std::size_t C = x.dim(0), len = x.dim(1), D = p.attention_dim();
  if (C != p.channels()) {
    throw ShapeError("sap_forward: frame width " + std::to_string(C) + " != SAP channels " +
                     std::to_string(p.channels()));
  }
  if (valid_len == 0) throw std::invalid_argument("sap_forward: valid_len must be >= 1");
  if (valid_len > len) throw std::invalid_argument("sap_forward: valid_len exceeds T");

  SapForwardState<T> s;
  s.valid_len = valid_len;
  s.total_len = len;
  s.hidden = Tensor<T>({valid_len, D});
  s.scores.resize(valid_len);
  for (std::size_t t = 0; t < valid_len; ++t) {
    double score = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      double z = p.b[d];
      const T* wrow = p.W.data().data() + d * C;
      for (std::size_t c = 0; c < C; ++c) z += static_cast<double>(wrow[c]) * x[c * len + t];
      const T h = static_cast<T>(std::tanh(z));
      s.hidden.at(t, d) = h;
      score += static_cast<double>(p.mu[d]) * h;
    }
    s.scores[t] = static_cast<T>(score);
  }
  s.weights = softmax<T>(s.scores);
  s.embedding = Tensor<T>({C});
  for (std::size_t c = 0; c < C; ++c) {
    double e = 0.0;
    for (std::size_t t = 0; t < valid_len; ++t) e += static_cast<double>(s.weights[t]) * x[c * len + t];
    s.embedding[c] = static_cast<T>(e);
  }
  return s;
}

template <typename T>
struct SapGrads {
  Tensor<T> x;  // C x T, zero on padded frames
  SapParams<T> params;
};

/// Adjoint of sap_forward w.r.t. x and (W, b, mu). Head grads are left zero.
template <typename T>
SapGrads<T> sap_backward(const SapForwardState<T>& s, const Tensor<T>& x, const SapParams<T>& p,
                         const Tensor<T>& grad_e) {
  const std::size_t C = p.channels(), D = p.attention_dim();
  if (x.rank() != 2 || x.dim(0) != C || x.dim(1) != s.total_len || s.weights.size() != s.valid_len ||
      s.hidden.dim(0) != s.valid_len) {
    throw std::logic_error("sap_backward: state does not match x");
  }
  if (grad_e.size() != C) throw ShapeError("sap_backward: grad_e length");
  const std::size_t len = s.total_len, tv = s.valid_len;
  SapGrads<T> g{Tensor<T>(x.shape()), zeros_like(p)};

  // e = sum w_t x_t
  std::vector<T> grad_w(tv);
  for (std::size_t t = 0; t < tv; ++t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      acc += static_cast<double>(x[c * len + t]) * grad_e[c];
      g.x[c * len + t] = s.weights[t] * grad_e[c];
    }
    grad_w[t] = static_cast<T>(acc);
  }
  const std::vector<T> grad_a = softmax_backward<T>(s.weights, grad_w);

  std::vector<double> gmu(D, 0.0), gb(D, 0.0), gW(D * C, 0.0);
  std::vector<double> gz(D);
  for (std::size_t t = 0; t < tv; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const double h = s.hidden.at(t, d);
      gmu[d] += static_cast<double>(grad_a[t]) * h;
      gz[d] = static_cast<double>(grad_a[t]) * p.mu[d] * (1.0 - h * h);
      gb[d] += gz[d];
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double xv = x[c * len + t];
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        gW[d * C + c] += gz[d] * xv;
        acc += gz[d] * p.W[d * C + c];
      }
      g.x[c * len + t] = static_cast<T>(g.x[c * len + t] + acc);
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    g.params.mu[d] = static_cast<T>(gmu[d]);
    g.params.b[d] = static_cast<T>(gb[d]);
  }
  for (std::size_t i = 0; i < gW.size(); ++i) g.params.W[i] = static_cast<T>(gW[i]);
  return g;
}

template <typename T>
Tensor<T> classify(const Tensor<T>& embedding, const SapParams<T>& p) {
  return linear(embedding, p.head_W, p.head_b);
}

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> grad_logits;  // softmax - onehot
};

/// -log softmax(logits)[target], evaluated via log-sum-exp.
template <typename T>
CrossEntropyResult cross_entropy(std::span<const T> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside [0, " +
                            std::to_string(logits.size()) + ")");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (T v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  CrossEntropyResult r;
  r.loss = lse - static_cast<double>(logits[target]);
  r.grad_logits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.grad_logits[i] = std::exp(static_cast<double>(logits[i]) - lse) - (i == target ? 1.0 : 0.0);
  }
  return r;
}

/// Index of the largest logit; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace lidsap
