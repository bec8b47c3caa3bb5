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

// Plain SGD with per-step cosine annealing over length-bucketed mini-batches.
//
// All randomness is keyed by (seed, epoch) for batch order and (seed, step)
// for augmentation and dropout, so the state needed to resume a run is the
// parameters plus the small TrainState record.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/config_io.hpp"
#include "lidsap/model.hpp"
#include "lidsap/random.hpp"
#include "lidsap/specaugment.hpp"

namespace lidsap {

struct TrainConfig {
  double lr_max = 0.005;
  double lr_min = 1e-4;
  std::size_t epochs = 100;
  std::size_t total_steps = 0;  // 0: epochs * steps_per_epoch
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t patience = 10;       // epochs without a new best val top-1; 0 disables
  std::size_t bucket_batches = 8;  // batches per length-sorted bucket

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("invalid train config: " + m); };
    if (!(lr_min > 0.0 && lr_min < lr_max)) fail("need 0 < lr_min < lr_max");
    if (batch_size < 2) fail("batch_size must be >= 2");
    if (epochs == 0 && total_steps == 0) fail("set epochs or total_steps");
    if (bucket_batches == 0) fail("bucket_batches must be >= 1");
  }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr_max", c.lr_max},         {"lr_min", c.lr_min},   {"epochs", c.epochs},
           {"total_steps", c.total_steps}, {"batch_size", c.batch_size}, {"seed", c.seed},
           {"patience", c.patience},     {"bucket_batches", c.bucket_batches}};
}

inline void from_json(const json& j, TrainConfig& c) {
  constexpr const char* w = "train";
  detail::reject_unknown_keys(j, {"lr_max", "lr_min", "epochs", "total_steps", "batch_size", "seed", "patience",
                                  "bucket_batches"}, w);
  detail::read_opt(j, "lr_max", c.lr_max, w);
  detail::read_opt(j, "lr_min", c.lr_min, w);
  detail::read_opt(j, "epochs", c.epochs, w);
  detail::read_opt(j, "total_steps", c.total_steps, w);
  detail::read_opt(j, "batch_size", c.batch_size, w);
  detail::read_opt(j, "seed", c.seed, w);
  detail::read_opt(j, "patience", c.patience, w);
  detail::read_opt(j, "bucket_batches", c.bucket_batches, w);
}

/// lr_min + (lr_max - lr_min)(1 + cos(pi * step / total)) / 2
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  if (step > total_steps) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " beyond total " +
                            std::to_string(total_steps));
  }
  if (step == 0) return lr_max;
  if (step == total_steps) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

/// p <- p - lr * g over every trainable tensor. Non-finite gradients abort
/// the step before anything is written.
template <typename T>
void sgd_step(Model<T>& params, const Model<T>& grads, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: lr must be >= 0");
  std::vector<std::pair<std::string, Tensor<T>*>> p;
  std::vector<const Tensor<T>*> g;
  visit_tensors(params, [&](const std::string& name, Tensor<T>& t, bool trainable) {
    if (trainable) p.emplace_back(name, &t);
  });
  visit_tensors(grads, [&](const std::string&, const Tensor<T>& t, bool trainable) {
    if (trainable) g.push_back(&t);
  });
  if (p.size() != g.size()) throw ShapeError("sgd_step: parameter/gradient structure mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].second->shape() != g[i]->shape()) throw ShapeError("sgd_step: shape mismatch at " + p[i].first);
    if (!g[i]->all_finite()) throw NonFiniteError("sgd_step: non-finite gradient in " + p[i].first);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& dst = p[i].second->storage();
    const auto& src = g[i]->storage();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(dst[k] - lr * src[k]);
  }
}

/// Batch order for one epoch: shuffle, sort buckets of `bucket_batches`
/// batches by length, cut into batches, shuffle the batches. A trailing
/// single-item batch is merged into its neighbour.
inline std::vector<std::vector<std::size_t>> plan_epoch(std::span<const std::size_t> lengths,
                                                        std::size_t batch_size, std::size_t bucket_batches,
                                                        std::uint64_t seed, std::size_t epoch) {
  if (lengths.empty()) throw std::invalid_argument("plan_epoch: no examples");
  Rng rng = derive_rng(seed, {stream::kShuffle, epoch});
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bucket = batch_size * bucket_batches;
  for (std::size_t s = 0; s < order.size(); s += bucket) {
    const auto e = std::min(order.size(), s + bucket);
    std::stable_sort(order.begin() + s, order.begin() + e,
                     [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    batches.emplace_back(order.begin() + s, order.begin() + std::min(order.size(), s + batch_size));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

struct Example {
  FeatureMap features;
  std::size_t label = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
  std::size_t step = 0;
  double epoch_loss_sum = 0.0;
  std::size_t epoch_loss_count = 0;
  double best_val_top1 = -1.0;
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
  bool stopped = false;
  std::vector<EpochRecord> history;
  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"val_top1", r.val_top1}};
}
inline void from_json(const json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<std::size_t>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_top1 = j.at("val_top1").get<double>();
}
inline void to_json(json& j, const TrainState& s) {
  j = json{{"step", s.step},
           {"epoch_loss_sum", s.epoch_loss_sum},
           {"epoch_loss_count", s.epoch_loss_count},
           {"best_val_top1", s.best_val_top1},
           {"best_epoch", s.best_epoch},
           {"bad_epochs", s.bad_epochs},
           {"stopped", s.stopped},
           {"history", s.history}};
}
inline void from_json(const json& j, TrainState& s) {
  s.step = j.at("step").get<std::size_t>();
  s.epoch_loss_sum = j.at("epoch_loss_sum").get<double>();
  s.epoch_loss_count = j.at("epoch_loss_count").get<std::size_t>();
  s.best_val_top1 = j.at("best_val_top1").get<double>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.bad_epochs = j.at("bad_epochs").get<std::size_t>();
  s.stopped = j.at("stopped").get<bool>();
  s.history = j.at("history").get<std::vector<EpochRecord>>();
}

/// Top-1 accuracy of eval-mode predictions on labelled examples.
template <typename T>
double evaluate_top1(const Model<T>& m, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += predict(m, ex.features).label == ex.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

template <typename T>
class Trainer {
 public:
  using EpochHook = std::function<void(const Trainer&, const EpochRecord&, bool improved)>;

  Trainer(Model<T> model, std::vector<Example> train, std::vector<Example> val, TrainConfig cfg,
          AugmentConfig augment)
      : model_(std::move(model)),
        train_(std::move(train)),
        val_(std::move(val)),
        cfg_(std::move(cfg)),
        augment_(std::move(augment)) {
    cfg_.validate();
    if (train_.empty()) throw std::invalid_argument("Trainer: empty training set");
    if (val_.empty()) throw std::invalid_argument("Trainer: empty validation set");
    const std::size_t n_classes = model_.config.labels.size();
    for (const auto* set : {&train_, &val_}) {
      for (const auto& ex : *set) {
        if (ex.label >= n_classes) throw std::invalid_argument("Trainer: example label outside the model's classes");
      }
    }
    for (const auto& ex : train_) lengths_.push_back(ex.features.frames());
    steps_per_epoch_ = plan_epoch(lengths_, cfg_.batch_size, cfg_.bucket_batches, cfg_.seed, 0).size();
    total_steps_ = cfg_.total_steps ? cfg_.total_steps : cfg_.epochs * steps_per_epoch_;
    best_ = model_;
  }

  void set_epoch_hook(EpochHook hook) { hook_ = std::move(hook); }

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return total_steps_; }
  bool finished() const { return state_.stopped || state_.step >= total_steps_; }

  const Model<T>& model() const { return model_; }
  const Model<T>& best_model() const { return best_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

  /// Resumes from a saved model + state; `best` defaults to `model`.
  void restore(Model<T> model, const TrainState& state, std::optional<Model<T>> best = std::nullopt) {
    if (!(model.config == model_.config)) throw std::invalid_argument("Trainer::restore: model config differs");
    model_ = std::move(model);
    best_ = best ? std::move(*best) : model_;
    state_ = state;
    plan_epoch_index_ = static_cast<std::size_t>(-1);
  }

  /// One SGD step; closes the epoch when it is the epoch's last batch.
  void step() {
    if (finished()) return;
    const std::size_t s = state_.step;
    const std::size_t epoch = s / steps_per_epoch_;
    if (plan_epoch_index_ != epoch) {
      plan_ = plan_epoch(lengths_, cfg_.batch_size, cfg_.bucket_batches, cfg_.seed, epoch);
      plan_epoch_index_ = epoch;
    }
    const auto& idx = plan_[s % steps_per_epoch_];

    std::vector<FeatureMap> augmented;
    augmented.reserve(idx.size());
    std::vector<std::size_t> targets;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const Example& ex = train_[idx[j]];
      Rng arng = derive_rng(cfg_.seed, {stream::kAugment, s, j});
      augmented.push_back(apply_specaugment(ex.features, augment_, arng));
      targets.push_back(ex.label);
    }
    std::vector<const FeatureMap*> ptrs;
    for (const auto& fm : augmented) ptrs.push_back(&fm);
    const Batch<T> batch = make_batch<T>(ptrs, targets);

    Rng drng = derive_rng(cfg_.seed, {stream::kDropout, s});
    Model<T> grads;
    const BatchOutput out = train_forward_backward(model_, batch, drng, grads);
    const double lr = cosine_lr(s, total_steps_, cfg_.lr_max, cfg_.lr_min);
    sgd_step(model_, grads, lr);
    last_batch_loss_ = out.loss;
    state_.epoch_loss_sum += out.loss;
    ++state_.epoch_loss_count;
    ++state_.step;

    if (state_.step % steps_per_epoch_ == 0 || state_.step == total_steps_) close_epoch(epoch, lr);
  }

  void run() {
    while (!finished()) step();
  }

  double last_batch_loss() const { return last_batch_loss_; }

 private:
  void close_epoch(std::size_t epoch, double lr) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = state_.epoch_loss_count ? state_.epoch_loss_sum / state_.epoch_loss_count : 0.0;
    rec.val_top1 = evaluate_top1(model_, val_);
    state_.epoch_loss_sum = 0.0;
    state_.epoch_loss_count = 0;
    state_.history.push_back(rec);
    const bool improved = rec.val_top1 > state_.best_val_top1;
    if (improved) {
      state_.best_val_top1 = rec.val_top1;
      state_.best_epoch = epoch;
      state_.bad_epochs = 0;
      best_ = model_;
    } else {
      ++state_.bad_epochs;
      if (cfg_.patience > 0 && state_.bad_epochs >= cfg_.patience) state_.stopped = true;
    }
    if (state_.step >= total_steps_) state_.stopped = true;
    if (hook_) hook_(*this, rec, improved);
  }

  Model<T> model_;
  Model<T> best_;
  std::vector<Example> train_;
  std::vector<Example> val_;
  TrainConfig cfg_;
  AugmentConfig augment_;
  std::vector<std::size_t> lengths_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t total_steps_ = 0;
  TrainState state_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t plan_epoch_index_ = static_cast<std::size_t>(-1);
  double last_batch_loss_ = 0.0;
  EpochHook hook_;
};

}  // namespace lidsap
