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

// JSON-lines manifests: one {"audio_filepath", "label", "duration"?} object
// per line. Relative paths resolve against the manifest's directory.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/config_io.hpp"
#include "lidsap/random.hpp"

namespace lidsap {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRecord {
  std::string audio_filepath;  // as written in the manifest; also the utterance id
  std::filesystem::path resolved;
  std::string label;
  std::optional<double> duration;
};

inline std::vector<ManifestRecord> parse_manifest(const std::string& text,
                                                  const std::filesystem::path& base_dir = {}) {
  std::vector<ManifestRecord> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ManifestError(where + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.audio_filepath = j.at("audio_filepath").get<std::string>();
      r.label = j.at("label").get<std::string>();
      if (j.contains("duration") && !j["duration"].is_null()) r.duration = j["duration"].get<double>();
    } catch (const json::exception& e) {
      throw ManifestError(where + ": " + e.what());
    }
    if (r.audio_filepath.empty()) throw ManifestError(where + ": empty audio_filepath");
    if (r.label.empty()) throw ManifestError(where + ": empty label");
    const std::filesystem::path p(r.audio_filepath);
    r.resolved = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

inline std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j = {{"audio_filepath", r.audio_filepath}, {"label", r.label}};
    if (r.duration) j["duration"] = *r.duration;
    out += j.dump() + "\n";
  }
  return out;
}

/// Sorted unique labels.
inline std::vector<std::string> label_set(const std::vector<ManifestRecord>& records) {
  std::vector<std::string> labels;
  for (const auto& r : records) labels.push_back(r.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

struct ManifestSplit {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> val;
};

/// Orders utterances by a seeded hash of their id and takes the first
/// round(fraction * n) for training. Input order does not matter.
inline ManifestSplit split_manifest(const std::vector<ManifestRecord>& records, double fraction,
                                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::uint64_t h = fnv1a64(records[i].audio_filepath, fnv1a64(std::to_string(seed) + ":"));
    keyed.emplace_back(h, i);
  }
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : records[a.second].audio_filepath < records[b.second].audio_filepath;
  });
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(records.size())));
  ManifestSplit s;
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    (k < n_train ? s.train : s.val).push_back(records[keyed[k].second]);
  }
  return s;
}

}  // namespace lidsap
