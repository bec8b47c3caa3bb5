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

// Top-1 accuracy, language -> genus -> family roll-up, and confusion
// matrices split by whether the true language was seen in training.

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lidsap {

class TaxonomyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Level { kLanguage, kGenus, kFamily };

inline const char* level_name(Level l) {
  switch (l) {
    case Level::kLanguage: return "language";
    case Level::kGenus: return "genus";
    case Level::kFamily: return "family";
  }
  return "?";
}

/// Strict tree: each language has one genus, each genus one family.
class Taxonomy {
 public:
  struct Entry {
    std::string genus;
    std::string family;
  };

  void add(const std::string& language, const std::string& genus, const std::string& family) {
    if (language.empty() || genus.empty() || family.empty()) throw TaxonomyError("taxonomy fields must be non-empty");
    if (entries_.count(language)) throw TaxonomyError("language '" + language + "' listed twice");
    auto [it, inserted] = genus_family_.emplace(genus, family);
    if (!inserted && it->second != family) {
      throw TaxonomyError("genus '" + genus + "' assigned to both '" + it->second + "' and '" + family + "'");
    }
    entries_[language] = {genus, family};
  }

  /// `language<TAB>genus<TAB>family` per line; '#' starts a comment.
  static Taxonomy parse(const std::string& text) {
    Taxonomy tx;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      std::vector<std::string> fields;
      std::size_t start = 0;
      for (;;) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (fields.size() != 3) {
        throw TaxonomyError("taxonomy line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      }
      try {
        tx.add(fields[0], fields[1], fields[2]);
      } catch (const TaxonomyError& e) {
        throw TaxonomyError("taxonomy line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (tx.entries_.empty()) throw TaxonomyError("taxonomy is empty");
    return tx;
  }

  static Taxonomy load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TaxonomyError("cannot open taxonomy " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Each language is its own genus and family.
  static Taxonomy identity(std::span<const std::string> languages) {
    Taxonomy tx;
    for (const auto& l : languages) tx.add(l, l, l);
    return tx;
  }

  bool contains(const std::string& language) const { return entries_.count(language) != 0; }

  const std::string& map(const std::string& language, Level level) const {
    if (level == Level::kLanguage) {
      if (!contains(language)) throw TaxonomyError("unknown language '" + language + "'");
      return language;
    }
    auto it = entries_.find(language);
    if (it == entries_.end()) throw TaxonomyError("unknown language '" + language + "'");
    return level == Level::kGenus ? it->second.genus : it->second.family;
  }

  /// Maps a label at level `from` to the coarser (or equal) level `to`.
  std::string coarsen(const std::string& label, Level from, Level to) const {
    if (static_cast<int>(to) < static_cast<int>(from)) throw TaxonomyError("cannot refine a coarse label");
    if (from == to) {
      if (from == Level::kLanguage && !contains(label)) throw TaxonomyError("unknown language '" + label + "'");
      return label;
    }
    if (from == Level::kLanguage) return map(label, to);
    auto it = genus_family_.find(label);
    if (it == genus_family_.end()) throw TaxonomyError("unknown genus '" + label + "'");
    return it->second;
  }

  std::vector<std::string> labels(Level level) const {
    std::set<std::string> s;
    for (const auto& [lang, e] : entries_) {
      s.insert(level == Level::kLanguage ? lang : level == Level::kGenus ? e.genus : e.family);
    }
    return {s.begin(), s.end()};
  }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> genus_family_;
};

template <typename Label>
double top1_accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("top1_accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("top1_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline std::vector<std::string> rollup(std::span<const std::string> languages, const Taxonomy& tx, Level level) {
  std::vector<std::string> out;
  out.reserve(languages.size());
  for (const auto& l : languages) out.push_back(tx.map(l, level));
  return out;
}

/// Counts over (true label, predicted label). Predicted axis is shared by
/// the known and unknown halves.
struct ConfusionMatrix {
  std::vector<std::string> true_labels;
  std::vector<std::string> predicted_labels;
  std::vector<std::vector<std::size_t>> counts;  // [true][pred]

  bool empty() const { return true_labels.empty(); }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
      for (auto c : row) n += c;
    }
    return n;
  }

  /// Sum over cells whose true and predicted labels coincide.
  std::size_t matches() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
      for (std::size_t j = 0; j < predicted_labels.size(); ++j) {
        if (true_labels[i] == predicted_labels[j]) n += counts[i][j];
      }
    }
    return n;
  }

  std::vector<std::vector<double>> row_percentages() const {
    std::vector<std::vector<double>> out;
    for (const auto& row : counts) {
      std::size_t sum = 0;
      for (auto c : row) sum += c;
      std::vector<double> r(row.size(), 0.0);
      if (sum) {
        for (std::size_t j = 0; j < row.size(); ++j) r[j] = 100.0 * static_cast<double>(row[j]) / sum;
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  std::string to_csv() const {
    std::ostringstream os;
    write_header(os);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
      os << true_labels[i];
      for (auto c : counts[i]) os << ',' << c;
      os << '\n';
    }
    return os.str();
  }

  /// Row-normalized percentages, two decimals.
  std::string to_percent_csv() const {
    std::ostringstream os;
    write_header(os);
    const auto pct = row_percentages();
    char buf[32];
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
      os << true_labels[i];
      for (double v : pct[i]) {
        std::snprintf(buf, sizeof buf, "%.2f", v);
        os << ',' << buf;
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  void write_header(std::ostream& os) const {
    os << "true\\predicted";
    for (const auto& p : predicted_labels) os << ',' << p;
    os << '\n';
  }
};

struct SplitConfusion {
  ConfusionMatrix known;    // true label seen in training
  ConfusionMatrix unknown;  // true label absent from training
};

/// Rows are partitioned by membership of the true label in `known_labels`;
/// columns are `known_labels` in the given order.
inline SplitConfusion confusion(std::span<const std::string> predictions, std::span<const std::string> labels,
                                std::span<const std::string> known_labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("confusion: length mismatch");
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < known_labels.size(); ++j) col[known_labels[j]] = j;
  std::set<std::string> unknown_rows;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!col.count(predictions[i])) {
      throw std::invalid_argument("confusion: prediction '" + predictions[i] + "' outside the known label set");
    }
    if (!col.count(labels[i])) unknown_rows.insert(labels[i]);
  }
  SplitConfusion out;
  const std::vector<std::string> pred_axis(known_labels.begin(), known_labels.end());
  out.known.predicted_labels = pred_axis;
  out.unknown.predicted_labels = pred_axis;
  // Known rows appear in training order even when absent from the evaluation set.
  out.known.true_labels = pred_axis;
  out.known.counts.assign(pred_axis.size(), std::vector<std::size_t>(pred_axis.size(), 0));
  out.unknown.true_labels.assign(unknown_rows.begin(), unknown_rows.end());
  out.unknown.counts.assign(unknown_rows.size(), std::vector<std::size_t>(pred_axis.size(), 0));
  std::map<std::string, std::size_t> urow;
  for (std::size_t i = 0; i < out.unknown.true_labels.size(); ++i) urow[out.unknown.true_labels[i]] = i;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t j = col.at(predictions[i]);
    if (auto it = col.find(labels[i]); it != col.end()) {
      ++out.known.counts[it->second][j];
    } else {
      ++out.unknown.counts[urow.at(labels[i])][j];
    }
  }
  return out;
}

struct AccuracyRow {
  Level level = Level::kLanguage;
  std::size_t correct = 0;
  std::size_t total = 0;
  bool available = true;  // false for levels finer than the classifier's labels
  double top1_percent() const { return total ? 100.0 * static_cast<double>(correct) / total : 0.0; }
};

/// Language, genus and family accuracy over utterances whose true label is
/// in `known_labels`; the others are excluded. Predictions and labels are at
/// `head` level, and rows finer than `head` are marked unavailable.
inline std::vector<AccuracyRow> hierarchical_accuracy(std::span<const std::string> predictions,
                                                      std::span<const std::string> labels,
                                                      std::span<const std::string> known_labels,
                                                      const Taxonomy& tx, Level head = Level::kLanguage) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("hierarchical_accuracy: length mismatch");
  const std::set<std::string> known(known_labels.begin(), known_labels.end());
  std::vector<AccuracyRow> rows = {{Level::kLanguage}, {Level::kGenus}, {Level::kFamily}};
  for (auto& r : rows) r.available = static_cast<int>(r.level) >= static_cast<int>(head);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!known.count(labels[i])) continue;
    for (auto& r : rows) {
      if (!r.available) continue;
      ++r.total;
      if (tx.coarsen(predictions[i], head, r.level) == tx.coarsen(labels[i], head, r.level)) ++r.correct;
    }
  }
  return rows;
}

}  // namespace lidsap
