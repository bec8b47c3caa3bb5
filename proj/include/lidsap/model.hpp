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

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/encoder.hpp"
#include "lidsap/features.hpp"
#include "lidsap/sap.hpp"

namespace lidsap {

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::quartznet_15x5();
  std::size_t attention_dim = 256;
  std::vector<std::string> labels;  // class index -> label

  SapConfig sap() const { return {encoder.out_channels, attention_dim, labels.size()}; }

  void validate() const {
    encoder.validate();
    if (attention_dim == 0) throw std::invalid_argument("attention_dim must be positive");
    if (labels.empty()) throw std::invalid_argument("model needs at least one class label");
    std::set<std::string> seen;
    for (const auto& l : labels) {
      if (l.empty()) throw std::invalid_argument("empty class label");
      if (!seen.insert(l).second) throw std::invalid_argument("duplicate class label '" + l + "'");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct Model {
  using value_type = T;
  ModelConfig config;
  EncoderParams<T> encoder;
  SapParams<T> sap;
};

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, Model<typename std::remove_const_t<P>::value_type>>
void visit_tensors(P& m, F&& f) {
  visit_tensors(m.encoder, f, "encoder");
  visit_tensors(m.sap, f, "sap");
}

template <typename T>
Model<T> allocate_model(const ModelConfig& cfg) {
  cfg.validate();
  return Model<T>{cfg, allocate_encoder<T>(cfg.encoder), allocate_sap<T>(cfg.sap())};
}

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return Model<T>{cfg, build_encoder<T>(cfg.encoder, seed), build_sap<T>(cfg.sap(), seed)};
}

template <typename T>
Model<T> zeros_like(const Model<T>& m) {
  return Model<T>{m.config, zeros_like(m.encoder), zeros_like(m.sap)};
}

template <typename U, typename T>
Model<U> cast_model(const Model<T>& m) {
  Model<U> out = allocate_model<U>(m.config);
  std::vector<const Tensor<T>*> src;
  visit_tensors(m, [&](const std::string&, const Tensor<T>& t, bool) { src.push_back(&t); });
  std::size_t i = 0;
  visit_tensors(out, [&](const std::string&, Tensor<U>& t, bool) { t = src[i++]->template cast<U>(); });
  return out;
}

// ---------------------------------------------------------------------------
// Batches.

template <typename T>
struct Batch {
  Tensor<T> features;  // N x F x T_max, zero past each item's length
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> targets;
};

/// Transposes T x F feature maps into a zero-padded N x F x T_max batch.
template <typename T>
Batch<T> make_batch(std::span<const FeatureMap* const> maps, std::span<const std::size_t> targets) {
  if (maps.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (!targets.empty() && targets.size() != maps.size()) {
    throw std::invalid_argument("make_batch: one target per map required");
  }
  const std::size_t F = maps[0]->bins();
  std::size_t t_max = 0;
  for (const auto* m : maps) {
    if (m->bins() != F) throw ShapeError("make_batch: feature widths differ");
    t_max = std::max(t_max, m->frames());
  }
  Batch<T> b;
  b.features = Tensor<T>({maps.size(), F, t_max});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const auto& d = maps[n]->data;
    for (std::size_t t = 0; t < maps[n]->frames(); ++t) {
      for (std::size_t f = 0; f < F; ++f) b.features.at(n, f, t) = static_cast<T>(d.at(t, f));
    }
    b.lengths.push_back(maps[n]->frames());
  }
  b.targets.assign(targets.begin(), targets.end());
  return b;
}

template <typename T>
Tensor<T> slice_item(const Tensor<T>& x, std::size_t n) {
  const std::size_t C = x.dim(1), len = x.dim(2);
  Tensor<T> out({C, len});
  std::copy_n(x.data().begin() + n * C * len, C * len, out.data().begin());
  return out;
}

struct BatchOutput {
  double loss = 0.0;  // mean over the batch
  std::vector<double> item_losses;
  std::vector<std::vector<double>> logits;
};

/// Forward (and, when `grads` is given, backward) over a batch. Parameters
/// are not modified; a train-mode pass leaves batch statistics in `cache`.
/// `grads` receives d(mean loss)/d(param) for every trainable tensor.
template <typename T>
BatchOutput forward_batch(const Model<T>& m, const Batch<T>& batch, Mode mode, Rng* rng,
                          Model<T>* grads = nullptr, EncoderCache<T>* cache = nullptr) {
  const std::size_t N = batch.lengths.size();
  if (grads && batch.targets.size() != N) throw std::invalid_argument("forward_batch: targets required for gradients");
  EncoderCache<T> local;
  if (!cache && (grads || mode == Mode::kTrain)) cache = &local;
  const Tensor<T> frames = encoder_forward(m.encoder, batch.features, batch.lengths, mode, rng, cache);

  BatchOutput out;
  Tensor<T> grad_frames;
  if (grads) {
    *grads = zeros_like(m);
    grad_frames = Tensor<T>(frames.shape());
  }
  const bool have_targets = batch.targets.size() == N;
  for (std::size_t n = 0; n < N; ++n) {
    const Tensor<T> x = slice_item(frames, n);
    const auto state = sap_forward(x, m.sap, batch.lengths[n]);
    const Tensor<T> logits = classify(state.embedding, m.sap);
    out.logits.emplace_back(logits.data().begin(), logits.data().end());
    if (!have_targets) continue;
    const auto ce = cross_entropy<T>(logits.data(), batch.targets[n]);
    out.item_losses.push_back(ce.loss);
    out.loss += ce.loss / static_cast<double>(N);
    if (!grads) continue;
    Tensor<T> g_logits({logits.size()});
    for (std::size_t k = 0; k < logits.size(); ++k) g_logits[k] = static_cast<T>(ce.grad_logits[k] / N);
    auto g_head = linear_backward(state.embedding, m.sap.head_W, g_logits);
    grads->sap.head_W += g_head.weights;
    grads->sap.head_b += g_head.bias;
    auto g_sap = sap_backward(state, x, m.sap, g_head.x);
    grads->sap.W += g_sap.params.W;
    grads->sap.b += g_sap.params.b;
    grads->sap.mu += g_sap.params.mu;
    std::copy(g_sap.x.data().begin(), g_sap.x.data().end(),
              grad_frames.data().begin() + n * g_sap.x.size());
  }
  if (grads) {
    auto g_enc = encoder_backward(m.encoder, *cache, grad_frames);
    grads->encoder = std::move(g_enc.params);
  }
  return out;
}

/// One training forward/backward: gradients into `grads`, then the BN
/// running statistics of `m` absorb this batch.
template <typename T>
BatchOutput train_forward_backward(Model<T>& m, const Batch<T>& batch, Rng& rng, Model<T>& grads) {
  EncoderCache<T> cache;
  BatchOutput out = forward_batch(m, batch, Mode::kTrain, &rng, &grads, &cache);
  encoder_update_running_stats(m.encoder, cache);
  return out;
}

struct Prediction {
  std::size_t label = 0;
  std::vector<double> posterior;
  std::vector<double> attention;  // w_t over frames
};

/// Eval-mode inference on one utterance.
template <typename T>
Prediction predict(const Model<T>& m, const FeatureMap& fm) {
  const FeatureMap* maps[] = {&fm};
  const Batch<T> batch = make_batch<T>(maps, {});
  const Tensor<T> frames = encoder_forward<T>(m.encoder, batch.features, batch.lengths, Mode::kEval,
                                              nullptr, nullptr);
  const Tensor<T> x = slice_item(frames, 0);
  const auto state = sap_forward(x, m.sap, fm.frames());
  const Tensor<T> logits = classify(state.embedding, m.sap);
  Prediction p;
  p.label = argmax<T>(logits.data());
  const std::vector<double> wide(logits.data().begin(), logits.data().end());
  p.posterior = softmax<double>(wide);
  p.attention.assign(state.weights.begin(), state.weights.end());
  return p;
}

}  // namespace lidsap
