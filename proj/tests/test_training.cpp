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
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "lidsap/checkpoint.hpp"
#include "lidsap/training.hpp"
#include "support/synthetic_corpus.hpp"

namespace lidsap {
namespace {

ModelConfig tiny_model(std::size_t n_classes) {
  ModelConfig mc;
  mc.encoder = EncoderConfig::tiny();
  mc.attention_dim = 16;
  for (std::size_t k = 0; k < n_classes; ++k) mc.labels.push_back("l" + std::to_string(k));
  return mc;
}

TrainConfig small_run(std::uint64_t seed, std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.seed = seed;
  tc.patience = 0;
  tc.lr_max = 0.05;
  return tc;
}

std::vector<float> flat_params(const Model<float>& m) {
  std::vector<float> out;
  visit_tensors(m, [&](const std::string&, const Tensor<float>& t, bool) {
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  });
  return out;
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 1000, 0.005, 1e-4), 0.005);
  EXPECT_EQ(cosine_lr(1000, 1000, 0.005, 1e-4), 1e-4);
  EXPECT_NEAR(cosine_lr(500, 1000, 0.005, 1e-4), 0.00255, 1e-15);
  EXPECT_THROW(cosine_lr(1001, 1000, 0.005, 1e-4), std::out_of_range);
  EXPECT_THROW(cosine_lr(0, 0, 0.005, 1e-4), std::invalid_argument);
}

TEST(CosineLr, MonotoneAndBounded) {
  double prev = cosine_lr(0, 777, 0.005, 1e-4);
  for (std::size_t s = 1; s <= 777; ++s) {
    const double lr = cosine_lr(s, 777, 0.005, 1e-4);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, 1e-4);
    EXPECT_LE(lr, 0.005);
    prev = lr;
  }
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig d;
  EXPECT_EQ(d.lr_max, 0.005);
  EXPECT_EQ(d.lr_min, 1e-4);
  EXPECT_EQ(d.batch_size, 16u);
  EXPECT_EQ(d.patience, 10u);
  TrainConfig bad;
  bad.batch_size = 1;
  EXPECT_ANY_THROW(bad.validate());
  bad = {};
  bad.lr_min = 0.01;
  EXPECT_ANY_THROW(bad.validate());
}

TEST(Sgd, UpdateRule) {
  ModelConfig mc = tiny_model(2);
  Model<double> m = build_model<double>(mc, 1);
  Model<double> g = zeros_like(m);
  m.sap.head_b[0] = 1.0;
  g.sap.head_b[0] = 2.0;
  const Model<double> before = m;
  sgd_step(m, g, 0.1);
  EXPECT_NEAR(m.sap.head_b[0], 0.8, 1e-15);
  EXPECT_EQ(m.sap.W, before.sap.W);

  Model<double> same = before;
  Model<double> noisy = zeros_like(m);
  for (auto& v : noisy.sap.W.storage()) v = 3.0;
  sgd_step(same, noisy, 0.0);
  EXPECT_EQ(same.sap.W, before.sap.W);
}

TEST(Sgd, NonFiniteGradientRefused) {
  Model<double> m = build_model<double>(tiny_model(2), 2);
  Model<double> g = zeros_like(m);
  g.sap.head_b[0] = 1.0;
  g.encoder.epilogue.pointwise[3] = std::numeric_limits<double>::infinity();
  const Model<double> before = m;
  EXPECT_THROW(sgd_step(m, g, 0.1), NonFiniteError);
  EXPECT_EQ(m.sap.head_b, before.sap.head_b);
}

TEST(PlanEpoch, CoversEveryIndexOnce) {
  std::vector<std::size_t> lengths(37);
  Rng rng(3);
  for (auto& l : lengths) l = 10 + rng() % 90;
  for (std::size_t epoch = 0; epoch < 5; ++epoch) {
    const auto plan = plan_epoch(lengths, 4, 2, 11, epoch);
    std::multiset<std::size_t> seen;
    for (const auto& b : plan) {
      EXPECT_GE(b.size(), 2u);
      seen.insert(b.begin(), b.end());
    }
    EXPECT_EQ(seen.size(), 37u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 37u);
    EXPECT_EQ(plan, plan_epoch(lengths, 4, 2, 11, epoch));
  }
  EXPECT_NE(plan_epoch(lengths, 4, 2, 11, 0), plan_epoch(lengths, 4, 2, 11, 1));
}

TEST(Model, InitialLossIsLogClassCount) {
  const auto examples = testing::synth_examples(23, 1, 5);
  const Model<float> m = build_model<float>(tiny_model(23), 5);
  std::vector<const FeatureMap*> maps;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < 8; ++i) {
    maps.push_back(&examples[i].features);
    targets.push_back(examples[i].label);
  }
  const auto batch = make_batch<float>(maps, targets);
  Rng rng(6);
  const auto out = forward_batch(m, batch, Mode::kTrain, &rng);
  EXPECT_NEAR(out.loss, std::log(23.0), 0.2);
}

TEST(Model, PaddingNeutralInEvalMode) {
  const auto ex = testing::synth_examples(2, 2, 7);
  Model<double> m = build_model<double>(tiny_model(2), 7);
  Rng rng(8);
  std::normal_distribution<double> d(0.0, 0.3);
  for (auto& v : m.sap.head_W.storage()) v = d(rng);
  const FeatureMap& shortest = ex[0].features.frames() < ex[1].features.frames() ? ex[0].features : ex[1].features;
  const FeatureMap& longest = &shortest == &ex[0].features ? ex[1].features : ex[0].features;
  ASSERT_LT(shortest.frames(), longest.frames());
  const FeatureMap* alone[] = {&shortest};
  const FeatureMap* padded[] = {&longest, &shortest};
  const std::size_t t1[] = {1}, t2[] = {0, 1};
  const auto a = forward_batch(m, make_batch<double>(alone, t1), Mode::kEval, nullptr);
  const auto b = forward_batch(m, make_batch<double>(padded, t2), Mode::kEval, nullptr);
  EXPECT_NEAR(a.item_losses[0], b.item_losses[1], 1e-5);
}

TEST(Model, SmallStepDecreasesLoss) {
  const auto ex = testing::synth_examples(3, 1, 9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Model<double> m = build_model<double>(tiny_model(3), seed);
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, 0.3);
    for (auto& v : m.sap.head_W.storage()) v = d(rng);
    const FeatureMap* maps[] = {&ex[seed % 3].features};
    const std::size_t target[] = {ex[seed % 3].label};
    const auto batch = make_batch<double>(maps, target);
    Model<double> g;
    const double before = forward_batch(m, batch, Mode::kEval, nullptr, &g).loss;
    sgd_step(m, g, 1e-4);
    const double after = forward_batch(m, batch, Mode::kEval, nullptr).loss;
    EXPECT_TRUE(after < before || std::abs(after - before) < 1e-9) << before << " -> " << after;
  }
}

TEST(Trainer, IdenticalRunsAreBitIdentical) {
  const auto ex = testing::synth_examples(3, 4, 10);
  auto run = [&] {
    Trainer<float> t(build_model<float>(tiny_model(3), 10), ex, ex, small_run(10, 4), AugmentConfig{});
    t.run();
    return std::make_pair(flat_params(t.model()), t.state());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(a.second.history.size(), 4u);
}

TEST(Trainer, ResumeIsBitIdentical) {
  const auto ex = testing::synth_examples(3, 4, 11);
  const TrainConfig tc = small_run(11, 20);
  Trainer<float> straight(build_model<float>(tiny_model(3), 11), ex, ex, tc, AugmentConfig{});
  ASSERT_GE(straight.total_steps(), 50u);
  straight.run();

  Trainer<float> first(build_model<float>(tiny_model(3), 11), ex, ex, tc, AugmentConfig{});
  for (int i = 0; i < 25; ++i) first.step();
  const auto model_bytes = serialize_checkpoint(first.model(), json(first.state()));
  const auto best_bytes = serialize_checkpoint(first.best_model());

  Trainer<float> second(build_model<float>(tiny_model(3), 99), ex, ex, tc, AugmentConfig{});
  auto loaded = deserialize_checkpoint(model_bytes);
  second.restore(std::move(loaded.model), loaded.train_state.get<TrainState>(),
                 deserialize_checkpoint(best_bytes).model);
  second.run();
  EXPECT_EQ(flat_params(second.model()), flat_params(straight.model()));
  EXPECT_EQ(flat_params(second.best_model()), flat_params(straight.best_model()));
  EXPECT_EQ(second.state(), straight.state());
}

TEST(Trainer, PatienceStopsEarly) {
  const auto ex = testing::synth_examples(3, 4, 12);
  TrainConfig tc = small_run(12, 50);
  tc.lr_max = 1e-3;
  tc.lr_min = 1e-4;
  tc.patience = 2;
  Trainer<float> t(build_model<float>(tiny_model(3), 12), ex, ex, tc, AugmentConfig{});
  t.run();
  EXPECT_TRUE(t.state().stopped);
  EXPECT_LT(t.state().history.size(), 50u);
  EXPECT_EQ(t.state().bad_epochs, 2u);
}

TEST(Trainer, RejectsOutOfRangeLabels) {
  auto ex = testing::synth_examples(3, 2, 13);
  ex[0].label = 7;
  EXPECT_THROW(Trainer<float>(build_model<float>(tiny_model(3), 13), ex, ex, small_run(13, 1), AugmentConfig{}),
               std::invalid_argument);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const Model<float> m = build_model<float>(tiny_model(4), 14);
  const json state = {{"note", "x"}, {"step", 12}};
  const auto a = serialize_checkpoint(m, state);
  const auto loaded = deserialize_checkpoint(a);
  EXPECT_EQ(loaded.train_state, state);
  EXPECT_EQ(serialize_checkpoint(loaded.model, loaded.train_state), a);
  EXPECT_EQ(flat_params(loaded.model), flat_params(m));
}

TEST(Checkpoint, FileRoundTripIsAtomic) {
  const auto dir = std::filesystem::temp_directory_path() / "lidsap_ckpt_test";
  std::filesystem::create_directories(dir);
  const Model<float> m = build_model<float>(tiny_model(2), 15);
  save_checkpoint(dir / "m.lidk", m);
  EXPECT_FALSE(std::filesystem::exists(dir / "m.lidk.tmp"));
  EXPECT_EQ(flat_params(load_checkpoint(dir / "m.lidk").model), flat_params(m));
  std::filesystem::remove_all(dir);
}

CheckpointError::Kind load_error_kind(const std::vector<std::uint8_t>& bytes, const ModelConfig* expected = nullptr) {
  try {
    deserialize_checkpoint(bytes, expected);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "corrupt checkpoint accepted";
  return CheckpointError::Kind::kIo;
}

TEST(Checkpoint, CorruptionIsReportedNotPartiallyLoaded) {
  const ModelConfig mc = tiny_model(3);
  const auto good = serialize_checkpoint(build_model<float>(mc, 16));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(load_error_kind(bad_magic), CheckpointError::Kind::kBadMagic);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(load_error_kind(bad_version), CheckpointError::Kind::kVersion);
  auto bad_length = good;
  bad_length[8] ^= 0x01;  // header length field
  const auto kind = load_error_kind(bad_length);
  EXPECT_TRUE(kind == CheckpointError::Kind::kStructure || kind == CheckpointError::Kind::kTruncated);
  auto truncated = good;
  truncated.resize(good.size() - 4);
  EXPECT_EQ(load_error_kind(truncated), CheckpointError::Kind::kTruncated);
  auto extended = good;
  extended.push_back(0);
  EXPECT_EQ(load_error_kind(extended), CheckpointError::Kind::kStructure);
  const ModelConfig other = tiny_model(4);
  EXPECT_EQ(load_error_kind(good, &other), CheckpointError::Kind::kIncompatible);
}

}  // namespace
}  // namespace lidsap
