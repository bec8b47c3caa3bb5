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

// The single declarative document behind every CLI verb:
//
//   {"features": {...}, "encoder": {...}, "attention_dim": 256,
//    "augment": {...}, "train": {...}, "taxonomy": "path.tsv",
//    "label_level": "language", "seed": 0}
//
// Every section is optional and starts from the library defaults.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lidsap/config_io.hpp"
#include "lidsap/evaluation.hpp"
#include "lidsap/training.hpp"

namespace lidsap {

inline Level parse_level(const std::string& s) {
  if (s == "language") return Level::kLanguage;
  if (s == "genus") return Level::kGenus;
  if (s == "family") return Level::kFamily;
  throw ConfigError("unknown label level '" + s + "' (expected language, genus or family)");
}

struct RunConfig {
  FeatureConfig features;
  EncoderConfig encoder = EncoderConfig::quartznet_15x5();
  std::size_t attention_dim = 256;
  AugmentConfig augment;
  TrainConfig train;
  std::string taxonomy;  // empty: none
  // Class granularity of the trained head. Coarser levels map training
  // labels through the taxonomy first.
  Level label_level = Level::kLanguage;
  std::uint64_t seed = 0;

  /// Copies the top-level seed into the training section.
  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
  }

  ModelConfig model_config(std::vector<std::string> labels) const {
    ModelConfig m;
    m.encoder = encoder;
    m.attention_dim = attention_dim;
    m.labels = std::move(labels);
    return m;
  }

  void validate() const {
    try {
      features.validate();
      encoder.validate();
      augment.validate(features.n_mels);
      train.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (encoder.input_dim != features.n_mels) {
      throw ConfigError("encoder.input_dim (" + std::to_string(encoder.input_dim) + ") must equal features.n_mels (" +
                        std::to_string(features.n_mels) + ")");
    }
    if (attention_dim == 0) throw ConfigError("attention_dim must be positive");
    if (label_level != Level::kLanguage && taxonomy.empty()) {
      throw ConfigError("label_level '" + std::string(level_name(label_level)) + "' needs a taxonomy");
    }
  }
};

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"features", c.features}, {"encoder", c.encoder},  {"attention_dim", c.attention_dim},
           {"augment", c.augment},   {"train", c.train},      {"taxonomy", c.taxonomy},
           {"label_level", level_name(c.label_level)}, {"seed", c.seed}};
  j["train"].erase("seed");
}

inline void from_json(const json& j, RunConfig& c) {
  constexpr const char* w = "config";
  detail::reject_unknown_keys(j, {"features", "encoder", "attention_dim", "augment", "train", "taxonomy",
                                  "label_level", "seed"}, w);
  if (j.contains("features")) c.features = j.at("features").get<FeatureConfig>();
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  detail::read_opt(j, "attention_dim", c.attention_dim, w);
  if (j.contains("augment")) c.augment = j.at("augment").get<AugmentConfig>();
  if (j.contains("train")) {
    if (j.at("train").contains("seed")) throw ConfigError("train.seed: set the top-level \"seed\" instead");
    c.train = j.at("train").get<TrainConfig>();
  }
  detail::read_opt(j, "taxonomy", c.taxonomy, w);
  if (j.contains("label_level")) c.label_level = parse_level(j.at("label_level").get<std::string>());
  std::uint64_t seed = c.seed;
  detail::read_opt(j, "seed", seed, w);
  c.set_seed(seed);
}

/// Parses, resolves a relative taxonomy path against the config's directory,
/// and validates.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  RunConfig c;
  try {
    c = json::parse(in).get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!c.taxonomy.empty() && std::filesystem::path(c.taxonomy).is_relative()) {
    c.taxonomy = (path.parent_path() / c.taxonomy).string();
  }
  c.validate();
  return c;
}

}  // namespace lidsap
