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

// JSON mapping for the configuration structs. Readers start from the struct
// defaults, so a document only needs the fields it overrides; unknown keys
// are rejected.

#pragma once

#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lidsap/encoder.hpp"
#include "lidsap/features.hpp"
#include "lidsap/model.hpp"
#include "lidsap/specaugment.hpp"

namespace lidsap {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read_opt(const json& j, const char* key, V& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline void to_json(json& j, const FeatureConfig& c) {
  j = json{{"sample_rate", c.sample_rate}, {"frame_length", c.frame_length},
           {"frame_hop", c.frame_hop},     {"fft_size", c.fft_size},
           {"n_mels", c.n_mels},           {"f_min", c.f_min},
           {"f_max", c.f_max},             {"preemphasis", c.preemphasis},
           {"log_floor", c.log_floor},     {"max_duration", c.max_duration}};
}

inline void from_json(const json& j, FeatureConfig& c) {
  constexpr const char* w = "features";
  detail::reject_unknown_keys(j, {"sample_rate", "frame_length", "frame_hop", "fft_size", "n_mels", "f_min",
                                  "f_max", "preemphasis", "log_floor", "max_duration"}, w);
  detail::read_opt(j, "sample_rate", c.sample_rate, w);
  detail::read_opt(j, "frame_length", c.frame_length, w);
  detail::read_opt(j, "frame_hop", c.frame_hop, w);
  detail::read_opt(j, "fft_size", c.fft_size, w);
  detail::read_opt(j, "n_mels", c.n_mels, w);
  detail::read_opt(j, "f_min", c.f_min, w);
  detail::read_opt(j, "f_max", c.f_max, w);
  detail::read_opt(j, "preemphasis", c.preemphasis, w);
  detail::read_opt(j, "log_floor", c.log_floor, w);
  detail::read_opt(j, "max_duration", c.max_duration, w);
}

inline void to_json(json& j, const EncoderConfig& c) {
  j = json{{"input_dim", c.input_dim},       {"repeats", c.repeats},
           {"channels", c.channels},         {"kernel_sizes", c.kernel_sizes},
           {"prologue_kernel", c.prologue_kernel}, {"out_channels", c.out_channels},
           {"dropout_rate", c.dropout_rate}};
}

/// Accepts "preset": "quartznet_15x5" | "tiny" as a starting point.
inline void from_json(const json& j, EncoderConfig& c) {
  constexpr const char* w = "encoder";
  detail::reject_unknown_keys(j, {"preset", "input_dim", "repeats", "channels", "kernel_sizes",
                                  "prologue_kernel", "out_channels", "dropout_rate"}, w);
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "quartznet_15x5") {
      c = EncoderConfig::quartznet_15x5();
    } else if (preset == "tiny") {
      c = EncoderConfig::tiny();
    } else {
      throw ConfigError("encoder.preset: unknown preset '" + preset + "'");
    }
  }
  detail::read_opt(j, "input_dim", c.input_dim, w);
  detail::read_opt(j, "repeats", c.repeats, w);
  detail::read_opt(j, "channels", c.channels, w);
  detail::read_opt(j, "kernel_sizes", c.kernel_sizes, w);
  detail::read_opt(j, "prologue_kernel", c.prologue_kernel, w);
  detail::read_opt(j, "out_channels", c.out_channels, w);
  detail::read_opt(j, "dropout_rate", c.dropout_rate, w);
}

inline void to_json(json& j, const AugmentConfig& c) {
  j = json{{"enabled", c.enabled},
           {"freq_mask_width", c.freq_mask_width},
           {"n_freq_masks", c.n_freq_masks},
           {"time_mask_width", c.time_mask_width},
           {"n_time_masks", c.n_time_masks},
           {"mask_value", c.mask_value}};
}

inline void from_json(const json& j, AugmentConfig& c) {
  constexpr const char* w = "augment";
  detail::reject_unknown_keys(j, {"enabled", "freq_mask_width", "n_freq_masks", "time_mask_width",
                                  "n_time_masks", "mask_value"}, w);
  detail::read_opt(j, "enabled", c.enabled, w);
  detail::read_opt(j, "freq_mask_width", c.freq_mask_width, w);
  detail::read_opt(j, "n_freq_masks", c.n_freq_masks, w);
  detail::read_opt(j, "time_mask_width", c.time_mask_width, w);
  detail::read_opt(j, "n_time_masks", c.n_time_masks, w);
  detail::read_opt(j, "mask_value", c.mask_value, w);
}

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder}, {"attention_dim", c.attention_dim}, {"labels", c.labels}};
}

inline void from_json(const json& j, ModelConfig& c) {
  constexpr const char* w = "model";
  detail::reject_unknown_keys(j, {"encoder", "attention_dim", "labels"}, w);
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  detail::read_opt(j, "attention_dim", c.attention_dim, w);
  detail::read_opt(j, "labels", c.labels, w);
}

}  // namespace lidsap
