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

// Finite-difference checks of every hand-written backward pass, in double
// precision. Each primitive is reduced to a scalar by a fixed random
// projection L = <r, y>, so the analytic gradient is backward(r).

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lidsap/gradcheck.hpp"
#include "lidsap/model.hpp"
#include "lidsap/ops.hpp"

namespace lidsap {

struct GradCheckRow {
  std::string name;
  double tolerance = 1e-3;
  GradCheckResult result;
  bool pass() const { return result.checked > 0 && result.max_rel_error <= tolerance; }
};

inline constexpr double kGradTolerance = 1e-3;
inline constexpr double kElementwiseGradTolerance = 1e-5;

namespace detail {

using TensorD = Tensor<double>;

inline TensorD random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

inline double dot(const TensorD& a, const TensorD& b) {
  a.require_same_shape(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename LossFn>
void check_into(GradCheckResult& r, LossFn&& loss, TensorD& point, const TensorD& analytic) {
  r.merge(finite_diff_check(loss, point.storage(), analytic.storage()));
}

}  // namespace detail

/// One row per primitive plus the encoder and the full model.
inline std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed) {
  using detail::dot;
  using detail::random_tensor;
  using detail::TensorD;
  Rng rng = derive_rng(seed, {stream::kStep, 0xC4ECull});
  std::vector<GradCheckRow> rows;

  {
    GradCheckRow row{"depthwise_conv1d", kGradTolerance, {}};
    TensorD x = random_tensor({2, 3, 9}, rng);
    TensorD k = random_tensor({3, 5}, rng);
    const TensorD r = random_tensor({2, 3, 9}, rng);
    auto loss = [&] { return dot(r, depthwise_conv1d(x, k)); };
    const auto g = depthwise_conv1d_backward(x, k, r);
    detail::check_into(row.result, loss, x, g.x);
    detail::check_into(row.result, loss, k, g.kernels);
    rows.push_back(row);
  }
  {
    GradCheckRow row{"pointwise_conv1d", kGradTolerance, {}};
    TensorD x = random_tensor({2, 3, 6}, rng);
    TensorD w = random_tensor({4, 3}, rng);
    TensorD b = random_tensor({4}, rng);
    const TensorD r = random_tensor({2, 4, 6}, rng);
    auto loss = [&] { return dot(r, pointwise_conv1d(x, w, &b)); };
    const auto g = pointwise_conv1d_backward(x, w, r, true);
    detail::check_into(row.result, loss, x, g.x);
    detail::check_into(row.result, loss, w, g.weights);
    detail::check_into(row.result, loss, b, *g.bias);
    rows.push_back(row);
  }
  {
    GradCheckRow row{"batch_norm_1d", kGradTolerance, {}};
    const std::vector<std::size_t> lens = {7, 4};
    TensorD x = random_tensor({2, 3, 7}, rng, 2.0);
    BatchNormState<double> st(3);
    st.gamma = random_tensor({3}, rng);
    st.beta = random_tensor({3}, rng);
    const TensorD r = random_tensor({2, 3, 7}, rng);
    auto loss = [&] {
      BatchNormCache<double> c;
      return dot(r, batch_norm_1d_apply(x, st, Mode::kTrain, &c, lens));
    };
    BatchNormCache<double> cache;
    batch_norm_1d_apply(x, st, Mode::kTrain, &cache, lens);
    const auto g = batch_norm_1d_backward(cache, st, r);
    detail::check_into(row.result, loss, x, g.x);
    detail::check_into(row.result, loss, st.gamma, g.gamma);
    detail::check_into(row.result, loss, st.beta, g.beta);
    rows.push_back(row);
  }
  {
    GradCheckRow row{"relu", kElementwiseGradTolerance, {}};
    TensorD x = random_tensor({3, 11}, rng);
    const TensorD r = random_tensor({3, 11}, rng);
    auto loss = [&] { return dot(r, relu(x)); };
    detail::check_into(row.result, loss, x, relu_backward(relu(x), r));
    rows.push_back(row);
  }
  {
    GradCheckRow row{"tanh", kElementwiseGradTolerance, {}};
    TensorD x = random_tensor({3, 11}, rng);
    const TensorD r = random_tensor({3, 11}, rng);
    auto loss = [&] { return dot(r, tanh_map(x)); };
    detail::check_into(row.result, loss, x, tanh_backward(tanh_map(x), r));
    rows.push_back(row);
  }
  {
    GradCheckRow row{"dropout", kElementwiseGradTolerance, {}};
    TensorD x = random_tensor({3, 11}, rng);
    const TensorD r = random_tensor({3, 11}, rng);
    const std::uint64_t mask_seed = rng();
    auto loss = [&] {
      Rng m = derive_rng(mask_seed, {stream::kDropout});
      return dot(r, dropout(x, 0.3, &m, Mode::kTrain));
    };
    Rng m = derive_rng(mask_seed, {stream::kDropout});
    TensorD mask;
    dropout(x, 0.3, &m, Mode::kTrain, &mask);
    detail::check_into(row.result, loss, x, dropout_backward(mask, r));
    rows.push_back(row);
  }
  {
    GradCheckRow row{"softmax", kGradTolerance, {}};
    TensorD z = random_tensor({7}, rng, 2.0);
    const TensorD r = random_tensor({7}, rng);
    auto loss = [&] {
      const auto p = softmax<double>(z.data());
      return dot(r, TensorD({7}, std::vector<double>(p)));
    };
    const auto p = softmax<double>(z.data());
    const auto g = softmax_backward<double>(p, r.data());
    detail::check_into(row.result, loss, z, TensorD({7}, g));
    rows.push_back(row);
  }
  {
    GradCheckRow row{"linear", kGradTolerance, {}};
    TensorD x = random_tensor({5}, rng);
    TensorD w = random_tensor({4, 5}, rng);
    TensorD b = random_tensor({4}, rng);
    const TensorD r = random_tensor({4}, rng);
    auto loss = [&] { return dot(r, linear(x, w, b)); };
    const auto g = linear_backward(x, w, r);
    detail::check_into(row.result, loss, x, g.x);
    detail::check_into(row.result, loss, w, g.weights);
    detail::check_into(row.result, loss, b, g.bias);
    rows.push_back(row);
  }
  {
    GradCheckRow row{"cross_entropy", kGradTolerance, {}};
    TensorD z = random_tensor({6}, rng, 2.0);
    const std::size_t target = std::uniform_int_distribution<std::size_t>(0, 5)(rng);
    auto loss = [&] { return cross_entropy<double>(z.data(), target).loss; };
    const auto ce = cross_entropy<double>(z.data(), target);
    detail::check_into(row.result, loss, z, TensorD({6}, ce.grad_logits));
    rows.push_back(row);
  }
  {
    GradCheckRow row{"sap_pooling", kGradTolerance, {}};
    SapParams<double> p = build_sap<double>({6, 5, 3}, rng());
    p.b = random_tensor({5}, rng, 0.5);
    TensorD x = random_tensor({6, 9}, rng);
    const std::size_t valid = 7;
    const TensorD r = random_tensor({6}, rng);
    auto loss = [&] { return dot(r, sap_forward(x, p, valid).embedding); };
    const auto st = sap_forward(x, p, valid);
    const auto g = sap_backward(st, x, p, r);
    detail::check_into(row.result, loss, x, g.x);
    detail::check_into(row.result, loss, p.W, g.params.W);
    detail::check_into(row.result, loss, p.b, g.params.b);
    detail::check_into(row.result, loss, p.mu, g.params.mu);
    rows.push_back(row);
  }
  {
    // Channel change exercises the projected skip path; dropout uses a fixed mask.
    GradCheckRow row{"encoder", kGradTolerance, {}};
    EncoderConfig cfg = EncoderConfig::tiny();
    cfg.input_dim = 5;
    cfg.channels = {6, 8, 8};
    cfg.out_channels = 7;
    cfg.dropout_rate = 0.1;
    EncoderParams<double> p = build_encoder<double>(cfg, rng());
    visit_tensors(p, [&](const std::string& name, TensorD& t, bool trainable) {
      if (trainable && (name.ends_with(".gamma") || name.ends_with(".beta"))) {
        for (auto& v : t.storage()) v += std::normal_distribution<double>(0.0, 0.2)(rng);
      }
    });
    const std::vector<std::size_t> lens = {8, 5};
    TensorD x = random_tensor({2, 5, 8}, rng);
    const TensorD r = random_tensor({2, 7, 8}, rng);
    const std::uint64_t mask_seed = rng();
    auto run = [&](EncoderCache<double>* cache) {
      Rng m = derive_rng(mask_seed, {stream::kDropout});
      return encoder_forward(p, x, lens, Mode::kTrain, &m, cache);
    };
    auto loss = [&] { return dot(r, run(nullptr)); };
    EncoderCache<double> cache;
    run(&cache);
    auto g = encoder_backward(p, cache, r);
    detail::check_into(row.result, loss, x, g.features);
    std::vector<TensorD*> params;
    std::vector<const TensorD*> grads;
    visit_tensors(p, [&](const std::string&, TensorD& t, bool tr) { if (tr) params.push_back(&t); });
    visit_tensors(g.params, [&](const std::string&, const TensorD& t, bool tr) { if (tr) grads.push_back(&t); });
    for (std::size_t i = 0; i < params.size(); ++i) detail::check_into(row.result, loss, *params[i], *grads[i]);
    rows.push_back(row);
  }
  {
    // Tiny encoder + SAP + head + mean cross-entropy over a padded batch.
    GradCheckRow row{"full_model", kGradTolerance, {}};
    ModelConfig cfg;
    cfg.encoder = EncoderConfig::tiny();
    cfg.encoder.input_dim = 6;
    cfg.attention_dim = 16;
    cfg.labels = {"a", "b", "c", "d"};
    Model<double> m = build_model<double>(cfg, rng());
    // A zero head would block every upstream gradient.
    m.sap.head_W = random_tensor(m.sap.head_W.shape(), rng, 0.5);
    m.sap.head_b = random_tensor(m.sap.head_b.shape(), rng, 0.5);
    Batch<double> batch{random_tensor({3, 6, 10}, rng), {10, 7, 4}, {0, 3, 1}};
    auto loss = [&] { return forward_batch(m, batch, Mode::kTrain, nullptr).loss; };
    Model<double> g;
    forward_batch(m, batch, Mode::kTrain, nullptr, &g);
    std::vector<TensorD*> params;
    std::vector<const TensorD*> grads;
    visit_tensors(m, [&](const std::string&, TensorD& t, bool tr) { if (tr) params.push_back(&t); });
    visit_tensors(g, [&](const std::string&, const TensorD& t, bool tr) { if (tr) grads.push_back(&t); });
    for (std::size_t i = 0; i < params.size(); ++i) detail::check_into(row.result, loss, *params[i], *grads[i]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lidsap
