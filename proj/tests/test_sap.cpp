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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "lidsap/gradcheck.hpp"
#include "lidsap/sap.hpp"

namespace lidsap {
namespace {

using TD = Tensor<double>;

TD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  TD t(std::move(s));
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

SapParams<double> random_sap(std::size_t C, std::size_t D, std::size_t K, Rng& rng) {
  SapParams<double> p = build_sap<double>({C, D, K}, rng());
  p.b = random_tensor({D}, rng, 0.5);
  p.head_W = random_tensor({K, C}, rng);
  p.head_b = random_tensor({K}, rng);
  return p;
}

TEST(Sap, HandComputedTwoByTwo) {
  SapParams<double> p = allocate_sap<double>({2, 2, 1});
  p.W = TD({2, 2}, {0.5, -0.25, 0.1, 0.2});
  p.b = TD({2}, {0.1, -0.2});
  p.mu = TD({2}, {1.0, -0.5});
  const TD x({2, 2}, {1.0, 2.0, 3.0, -1.0});  // frames x_1 = (1, 3), x_2 = (2, -1)
  // h_t = tanh(W x_t + b), a_t = mu . h_t, w = softmax(a), e = sum w_t x_t.
  const long double h1a = std::tanh(0.5L * 1 - 0.25L * 3 + 0.1L), h1b = std::tanh(0.1L * 1 + 0.2L * 3 - 0.2L);
  const long double h2a = std::tanh(0.5L * 2 - 0.25L * -1 + 0.1L), h2b = std::tanh(0.1L * 2 + 0.2L * -1 - 0.2L);
  const long double a1 = h1a - 0.5L * h1b, a2 = h2a - 0.5L * h2b;
  const long double w1 = 1.0L / (1.0L + std::exp(a2 - a1)), w2 = 1.0L - w1;
  const auto s = sap_forward(x, p, 2);
  EXPECT_NEAR(s.weights[0], static_cast<double>(w1), 1e-12);
  EXPECT_NEAR(s.embedding[0], static_cast<double>(w1 * 1 + w2 * 2), 1e-12);
  EXPECT_NEAR(s.embedding[1], static_cast<double>(w1 * 3 + w2 * -1), 1e-12);
}

TEST(Sap, WeightsAreADistributionAndEmbeddingInHull) {
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const std::size_t C = 1 + rng() % 6, D = 1 + rng() % 5, T = 1 + rng() % 12;
    const std::size_t valid = 1 + rng() % T;
    const auto p = random_sap(C, D, 3, rng);
    const TD x = random_tensor({C, T}, rng, 3.0);
    const auto s = sap_forward(x, p, valid);
    ASSERT_EQ(s.weights.size(), valid);
    EXPECT_NEAR(std::accumulate(s.weights.begin(), s.weights.end(), 0.0), 1.0, 1e-6);
    for (double w : s.weights) EXPECT_GE(w, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double lo = x.at(c, 0), hi = x.at(c, 0);
      for (std::size_t t = 1; t < valid; ++t) lo = std::min(lo, x.at(c, t)), hi = std::max(hi, x.at(c, t));
      EXPECT_GE(s.embedding[c], lo - 1e-12);
      EXPECT_LE(s.embedding[c], hi + 1e-12);
    }
  }
}

TEST(Sap, SingleFrameIsIdentity) {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    const auto p = build_sap<float>({5, 4, 2}, rng());
    Tensor<float> x({5, 3});
    std::normal_distribution<float> d(0.0f, 2.0f);
    for (auto& v : x.storage()) v = d(rng);
    const auto s = sap_forward(x, p, 1);
    ASSERT_EQ(s.weights.size(), 1u);
    EXPECT_EQ(s.weights[0], 1.0f);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(s.embedding[c], x.at(c, 0));
  }
}

TEST(Sap, IdenticalFramesGiveUniformWeights) {
  Rng rng(43);
  const auto p = random_sap(4, 3, 2, rng);
  const TD frame = random_tensor({4}, rng);
  TD x({4, 7});
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t t = 0; t < 7; ++t) x.at(c, t) = frame[c];
  }
  const auto s = sap_forward(x, p, 7);
  for (double w : s.weights) EXPECT_NEAR(w, 1.0 / 7.0, 1e-6);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(s.embedding[c], frame[c], 1e-6);
}

TEST(Sap, PaddingIsBitNeutral) {
  Rng rng(44);
  for (int i = 0; i < 100; ++i) {
    const std::size_t C = 1 + rng() % 6, valid = 1 + rng() % 8, pad = 1 + rng() % 5;
    const auto p = random_sap(C, 4, 3, rng);
    const TD x = random_tensor({C, valid}, rng);
    TD padded({C, valid + pad});
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < valid + pad; ++t) padded.at(c, t) = t < valid ? x.at(c, t) : 1e3 * (t + 1);
    }
    const auto a = sap_forward(x, p, valid);
    const auto b = sap_forward(padded, p, valid);
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(classify(a.embedding, p), classify(b.embedding, p));
  }
}

TEST(Sap, ScoreShiftLeavesWeightsAndEmbedding) {
  Rng rng(45);
  const auto p = random_sap(3, 4, 2, rng);
  const TD x = random_tensor({3, 6}, rng);
  const auto s = sap_forward(x, p, 6);
  std::vector<double> shifted = s.scores;
  for (auto& a : shifted) a += 17.5;
  const auto w = softmax<double>(shifted);
  for (std::size_t c = 0; c < 3; ++c) {
    double e = 0.0;
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_NEAR(w[t], s.weights[t], 1e-5);
      e += w[t] * x.at(c, t);
    }
    EXPECT_NEAR(e, s.embedding[c], 1e-5);
  }
}

TEST(Sap, RejectsBadLengths) {
  Rng rng(46);
  const auto p = random_sap(3, 2, 2, rng);
  const TD x = random_tensor({3, 4}, rng);
  EXPECT_THROW(sap_forward(x, p, 0), std::invalid_argument);
  EXPECT_THROW(sap_forward(x, p, 5), std::invalid_argument);
  EXPECT_THROW(sap_forward(random_tensor({2, 4}, rng), p, 2), ShapeError);
}

TEST(SapBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(47);
  const auto p = random_sap(3, 4, 2, rng);
  const TD x = random_tensor({3, 5}, rng);
  const auto s = sap_forward(x, p, 4);
  const auto g = sap_backward(s, x, p, TD({3}));
  for (const TD* t : {&g.x, &g.params.W, &g.params.b, &g.params.mu}) {
    for (double v : t->storage()) EXPECT_EQ(v, 0.0);
  }
}

TEST(SapBackward, SingleFramePassesUpstreamThrough) {
  Rng rng(48);
  SapParams<double> p = random_sap(4, 3, 2, rng);
  TD x = random_tensor({4, 1}, rng);
  const TD r = random_tensor({4}, rng);
  const auto s = sap_forward(x, p, 1);
  const auto g = sap_backward(s, x, p, r);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(g.x[c], r[c], 1e-12);
  auto loss = [&] {
    const auto st = sap_forward(x, p, 1);
    double v = 0.0;
    for (std::size_t c = 0; c < 4; ++c) v += r[c] * st.embedding[c];
    return v;
  };
  EXPECT_LE(finite_diff_check(loss, x.storage(), g.x.storage()).max_rel_error, 1e-6);
}

TEST(SapBackward, FiniteDifferenceRandomCase) {
  Rng rng(49);
  SapParams<double> p = random_sap(5, 4, 2, rng);
  TD x = random_tensor({5, 8}, rng);
  const TD r = random_tensor({5}, rng);
  auto loss = [&] {
    const auto st = sap_forward(x, p, 6);
    double v = 0.0;
    for (std::size_t c = 0; c < 5; ++c) v += r[c] * st.embedding[c];
    return v;
  };
  const auto s = sap_forward(x, p, 6);
  const auto g = sap_backward(s, x, p, r);
  GradCheckResult res = finite_diff_check(loss, x.storage(), g.x.storage());
  res.merge(finite_diff_check(loss, p.W.storage(), g.params.W.storage()));
  res.merge(finite_diff_check(loss, p.b.storage(), g.params.b.storage()));
  res.merge(finite_diff_check(loss, p.mu.storage(), g.params.mu.storage()));
  EXPECT_LE(res.max_rel_error, 1e-3);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(g.x.at(c, 6), 0.0);
    EXPECT_EQ(g.x.at(c, 7), 0.0);
  }
}

TEST(Head, ZeroHeadGivesUniformPosterior) {
  const auto p = build_sap<double>({4, 3, 5}, 1);
  const TD e({4}, {1.0, -2.0, 0.5, 3.0});
  const TD logits = classify(e, p);
  for (double z : logits.storage()) EXPECT_EQ(z, 0.0);
  for (double q : softmax<double>(logits.data())) EXPECT_NEAR(q, 0.2, 1e-15);
}

TEST(Head, IdentityHeadAddsBias) {
  SapParams<double> p = build_sap<double>({3, 2, 3}, 2);
  for (std::size_t i = 0; i < 3; ++i) p.head_W.at(i, i) = 1.0;
  p.head_b = TD({3}, {0.1, 0.2, 0.3});
  const TD e({3}, {1.0, 2.0, 3.0});
  const TD logits = classify(e, p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(logits[i], e[i] + p.head_b[i], 1e-15);
}

TEST(CrossEntropy, ClosedForms) {
  const std::vector<double> sure = {10.0, -10.0};
  EXPECT_NEAR(cross_entropy<double>(sure, 0).loss, 2.0611536e-9, 1e-15);
  const std::vector<double> flat(23, 0.25);
  EXPECT_NEAR(cross_entropy<double>(flat, 7).loss, std::log(23.0), 1e-12);
  EXPECT_NEAR(std::log(23.0), 3.1355, 1e-4);
  EXPECT_THROW(cross_entropy<double>(sure, 2), std::out_of_range);
}

TEST(CrossEntropy, GradientSumsToZero) {
  Rng rng(50);
  std::normal_distribution<double> d(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> z(2 + rng() % 20);
    for (auto& v : z) v = d(rng);
    const auto ce = cross_entropy<double>(z, rng() % z.size());
    EXPECT_NEAR(std::accumulate(ce.grad_logits.begin(), ce.grad_logits.end(), 0.0), 0.0, 1e-6);
    EXPECT_TRUE(std::isfinite(ce.loss));
  }
}

TEST(Argmax, TiesResolveToLowestIndex) {
  const std::vector<double> v = {1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(argmax<double>(v), 1u);
  EXPECT_THROW(argmax<double>(std::vector<double>{}), std::invalid_argument);
}

}  // namespace
}  // namespace lidsap
