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


// Synthetic spoken-language stand-in: class k is a sum of tones drawn from
// its own frequency band plus weak broadband noise. Clip lengths vary so
// batches exercise padding.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lidsap/features.hpp"
#include "lidsap/random.hpp"
#include "lidsap/training.hpp"
#include "lidsap/wav.hpp"

namespace lidsap::testing {

struct SyntheticClip {
  std::vector<float> samples;
  std::size_t label = 0;
  std::string id;
};

/// Band for class k of n: the 200..6200 Hz range cut into n equal pieces,
/// keeping the middle half of each so neighbouring classes never overlap.
inline std::pair<double, double> class_band(std::size_t k, std::size_t n_classes) {
  const double width = 6000.0 / static_cast<double>(n_classes);
  const double lo = 200.0 + width * static_cast<double>(k);
  return {lo + 0.25 * width, lo + 0.75 * width};
}

inline SyntheticClip synth_clip(std::size_t label, std::size_t n_classes, std::size_t index, std::uint64_t seed,
                                std::uint32_t sample_rate = 16000) {
  Rng rng = derive_rng(seed, {0x5157ull, label, index});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double seconds = 0.4 + 0.3 * unit(rng);
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  const auto [lo, hi] = class_band(label, n_classes);
  SyntheticClip clip;
  clip.label = label;
  clip.id = "c" + std::to_string(label) + "_" + std::to_string(index);
  clip.samples.assign(n, 0.0f);
  constexpr int kTones = 4;
  std::normal_distribution<double> noise(0.0, 0.01);
  double freq[kTones], phase[kTones];
  for (int i = 0; i < kTones; ++i) {
    freq[i] = lo + (hi - lo) * unit(rng);
    phase[i] = 2.0 * std::numbers::pi * unit(rng);
  }
  for (std::size_t t = 0; t < n; ++t) {
    double v = noise(rng);
    for (int i = 0; i < kTones; ++i) {
      v += 0.15 * std::sin(2.0 * std::numbers::pi * freq[i] * t / sample_rate + phase[i]);
    }
    clip.samples[t] = static_cast<float>(v);
  }
  return clip;
}

/// `per_class` clips for each of `n_classes`, interleaved by class.
inline std::vector<SyntheticClip> synth_corpus(std::size_t n_classes, std::size_t per_class, std::uint64_t seed) {
  std::vector<SyntheticClip> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t k = 0; k < n_classes; ++k) out.push_back(synth_clip(k, n_classes, i, seed));
  }
  return out;
}

inline std::vector<Example> synth_examples(std::size_t n_classes, std::size_t per_class, std::uint64_t seed,
                                           const FeatureConfig& cfg = {}) {
  std::vector<Example> out;
  const MfscExtractor extract(cfg);
  for (auto& c : synth_corpus(n_classes, per_class, seed)) {
    AudioClip clip{std::move(c.samples), cfg.sample_rate, c.id};
    out.push_back({extract(clip), c.label});
  }
  return out;
}

/// Writes the corpus as WAV files plus a manifest; returns the manifest path.
inline std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<std::string>& labels,
                                          std::size_t per_class, std::uint64_t seed) {
  std::filesystem::create_directories(dir / "wav");
  std::ofstream manifest(dir / "manifest.jsonl");
  for (const auto& c : synth_corpus(labels.size(), per_class, seed)) {
    const std::string rel = "wav/" + c.id + ".wav";
    write_wav((dir / rel).string(), c.samples, 16000);
    manifest << R"({"audio_filepath": ")" << rel << R"(", "label": ")" << labels[c.label]
             << R"(", "duration": )" << static_cast<double>(c.samples.size()) / 16000.0 << "}\n";
  }
  return dir / "manifest.jsonl";
}

}  // namespace lidsap::testing
