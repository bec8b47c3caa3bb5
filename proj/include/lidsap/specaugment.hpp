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

// Frequency and time masking on log-mel feature maps. No time warping.

#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

#include "lidsap/features.hpp"
#include "lidsap/random.hpp"

namespace lidsap {

struct AugmentConfig {
  bool enabled = true;
  std::size_t freq_mask_width = 15;  // F, max bins per mask
  std::size_t n_freq_masks = 2;
  std::size_t time_mask_width = 25;  // max frames per mask
  std::size_t n_time_masks = 2;
  float mask_value = 0.0f;

  void validate(std::size_t n_mels) const {
    if (freq_mask_width > n_mels) {
      throw std::invalid_argument("freq_mask_width exceeds n_mels");
    }
  }
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

/// One masked span, [start, start + width).
struct MaskSpan {
  std::size_t start = 0;
  std::size_t width = 0;
};

struct MaskPlan {
  std::vector<MaskSpan> freq;
  std::vector<MaskSpan> time;
};

/// Draws the masks for a bins x frames map: width ~ U{0..F}, start ~
/// U{0..bins-width}; time masks use width ~ U{0..min(T_m, frames)}.
inline MaskPlan draw_masks(std::size_t bins, std::size_t frames, const AugmentConfig& cfg, Rng& rng) {
  MaskPlan plan;
  if (!cfg.enabled) return plan;
  cfg.validate(bins);
  for (std::size_t i = 0; i < cfg.n_freq_masks; ++i) {
    const std::size_t w = std::uniform_int_distribution<std::size_t>(0, cfg.freq_mask_width)(rng);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, bins - w)(rng);
    plan.freq.push_back({s, w});
  }
  const std::size_t t_cap = std::min(cfg.time_mask_width, frames);
  for (std::size_t i = 0; i < cfg.n_time_masks; ++i) {
    const std::size_t w = std::uniform_int_distribution<std::size_t>(0, t_cap)(rng);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, frames - w)(rng);
    plan.time.push_back({s, w});
  }
  return plan;
}

/// Returns a masked copy; the input is left untouched.
inline FeatureMap apply_specaugment(const FeatureMap& fm, const AugmentConfig& cfg, Rng& rng) {
  FeatureMap out = fm;
  if (!cfg.enabled) return out;
  const MaskPlan plan = draw_masks(fm.bins(), fm.frames(), cfg, rng);
  for (const auto& m : plan.freq) {
    for (std::size_t t = 0; t < fm.frames(); ++t) {
      for (std::size_t f = m.start; f < m.start + m.width; ++f) out.data.at(t, f) = cfg.mask_value;
    }
  }
  for (const auto& m : plan.time) {
    for (std::size_t t = m.start; t < m.start + m.width; ++t) {
      for (std::size_t f = 0; f < fm.bins(); ++f) out.data.at(t, f) = cfg.mask_value;
    }
  }
  return out;
}

}  // namespace lidsap
