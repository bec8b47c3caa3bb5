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

// The CLI verbs as library calls. Each validates its inputs before touching
// the output directory, and every file is written through a temporary name.
//
// Exit codes: 0 success, 1 error, 3 partial failure (some utterances could
// not be processed and the caller did not opt into partial results).

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "lidsap/checkpoint.hpp"
#include "lidsap/evaluation.hpp"
#include "lidsap/features.hpp"
#include "lidsap/gradcheck_suite.hpp"
#include "lidsap/manifest.hpp"
#include "lidsap/run_config.hpp"
#include "lidsap/training.hpp"
#include "lidsap/wav.hpp"

namespace lidsap {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 3;

struct UtteranceFailure {
  std::string id;
  std::string error;
};

inline void to_json(json& j, const UtteranceFailure& f) { j = json{{"audio_filepath", f.id}, {"error", f.error}}; }

struct ExtractedFeatures {
  std::vector<FeatureMap> maps;
  std::vector<std::size_t> record_index;  // maps[k] came from records[record_index[k]]
  std::vector<UtteranceFailure> failures;
};

/// Loads and featurizes every record; unreadable or invalid clips are
/// collected as failures instead of aborting the batch.
inline ExtractedFeatures extract_features(const std::vector<ManifestRecord>& records, const FeatureConfig& cfg) {
  const MfscExtractor extract(cfg);
  ExtractedFeatures out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.maps.push_back(extract(load_wav(records[i].resolved.string(), records[i].audio_filepath)));
      out.record_index.push_back(i);
    } catch (const std::exception& e) {
      out.failures.push_back({records[i].audio_filepath, e.what()});
    }
  }
  return out;
}

/// `00042_stem.mfsc`: manifest position keeps names unique and ordered.
inline std::string feature_file_name(std::size_t index, const std::string& audio_path) {
  std::string stem = std::filesystem::path(audio_path).stem().string();
  for (char& c : stem) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  char prefix[24];
  std::snprintf(prefix, sizeof prefix, "%05zu_", index);
  return prefix + stem + ".mfsc";
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// featurize

struct FeaturizeOptions {
  std::filesystem::path manifest;
  RunConfig config;
  std::filesystem::path out_dir;
  bool allow_partial = false;
};

struct FeaturizeSummary {
  std::size_t count = 0;
  std::size_t total_frames = 0;
  std::vector<std::string> files;
  std::vector<UtteranceFailure> failures;
  int exit_code = kExitOk;
};

inline FeaturizeSummary cmd_featurize(const FeaturizeOptions& opt, std::ostream& log) {
  opt.config.validate();
  const auto records = load_manifest(opt.manifest);
  if (records.empty()) throw ManifestError("manifest " + opt.manifest.string() + " has no records");
  std::filesystem::create_directories(opt.out_dir);

  const MfscExtractor extract(opt.config.features);
  FeaturizeSummary s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      const FeatureMap fm = extract(load_wav(records[i].resolved.string(), records[i].audio_filepath));
      const std::string name = feature_file_name(i, records[i].audio_filepath);
      write_file_atomic(opt.out_dir / name, format_feature_dump(fm));
      s.files.push_back(name);
      s.total_frames += fm.frames();
      ++s.count;
    } catch (const std::exception& e) {
      log << "featurize: skipping " << records[i].audio_filepath << ": " << e.what() << "\n";
      s.failures.push_back({records[i].audio_filepath, e.what()});
    }
  }
  if (s.count == 0) {
    s.exit_code = kExitError;
  } else if (!s.failures.empty() && !opt.allow_partial) {
    s.exit_code = kExitPartial;
  }
  const json summary = {{"count", s.count},       {"failures", s.failures}, {"total_frames", s.total_frames},
                        {"files", s.files},       {"exit_code", s.exit_code}};
  write_file_atomic(opt.out_dir / "summary.json", summary.dump(2) + "\n");
  log << "featurize: " << s.count << " written, " << s.failures.size() << " failed, " << s.total_frames
      << " frames\n";
  return s;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  RunConfig config;
  std::filesystem::path train_manifest;
  std::optional<std::filesystem::path> val_manifest;
  std::optional<double> split;  // carve validation out of train_manifest
  std::filesystem::path out_dir;
  bool resume = false;  // continue from out_dir/last.lidk when present
};

struct TrainResult {
  std::vector<std::string> labels;
  std::size_t train_utterances = 0;
  std::size_t val_utterances = 0;
  std::vector<UtteranceFailure> failures;
  TrainState state;
};

inline std::string format_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_top1\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.train_loss) + "," +
           format_double(r.val_top1) + "\n";
  }
  return out;
}

namespace detail {

inline std::vector<Example> to_examples(ExtractedFeatures&& ex, const std::vector<ManifestRecord>& records,
                                        const std::vector<std::string>& labels) {
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < labels.size(); ++k) index[labels[k]] = k;
  std::vector<Example> out;
  for (std::size_t k = 0; k < ex.maps.size(); ++k) {
    out.push_back({std::move(ex.maps[k]), index.at(records[ex.record_index[k]].label)});
  }
  return out;
}

inline json checkpoint_state(const RunConfig& cfg, const TrainState& state) {
  return json{{"run_config", cfg}, {"trainer", state}};
}

}  // namespace detail

inline TrainResult cmd_train(const TrainOptions& opt, std::ostream& log) {
  const RunConfig& cfg = opt.config;
  cfg.validate();
  if (opt.split.has_value() == opt.val_manifest.has_value()) {
    throw ConfigError("train: give exactly one of a validation manifest or --split");
  }
  auto records = load_manifest(opt.train_manifest);
  if (records.empty()) throw ManifestError("training manifest has no records");
  std::vector<ManifestRecord> train_recs, val_recs;
  if (opt.split) {
    auto s = split_manifest(records, *opt.split, cfg.seed);
    train_recs = std::move(s.train);
    val_recs = std::move(s.val);
  } else {
    train_recs = std::move(records);
    val_recs = load_manifest(*opt.val_manifest);
  }
  if (train_recs.empty() || val_recs.empty()) throw ManifestError("train and validation sets must be non-empty");

  if (cfg.label_level != Level::kLanguage) {
    const Taxonomy tx = Taxonomy::load(cfg.taxonomy);
    for (auto* set : {&train_recs, &val_recs}) {
      for (auto& r : *set) r.label = tx.map(r.label, cfg.label_level);
    }
  }
  const auto labels = label_set(train_recs);
  std::vector<std::string> missing;
  for (const auto& l : label_set(val_recs)) {
    if (!std::binary_search(labels.begin(), labels.end(), l)) missing.push_back(l);
  }
  if (!missing.empty()) {
    std::string m;
    for (const auto& l : missing) m += (m.empty() ? "" : ", ") + l;
    throw ConfigError("validation labels missing from the training set: " + m);
  }
  const ModelConfig model_cfg = cfg.model_config(labels);
  model_cfg.validate();

  TrainResult result;
  result.labels = labels;
  auto train_feats = extract_features(train_recs, cfg.features);
  auto val_feats = extract_features(val_recs, cfg.features);
  for (auto* f : {&train_feats, &val_feats}) {
    for (const auto& e : f->failures) {
      log << "train: skipping " << e.id << ": " << e.error << "\n";
      result.failures.push_back(e);
    }
  }
  auto train = detail::to_examples(std::move(train_feats), train_recs, labels);
  auto val = detail::to_examples(std::move(val_feats), val_recs, labels);
  if (train.size() < 2 || val.empty()) throw ManifestError("too few readable utterances to train");
  result.train_utterances = train.size();
  result.val_utterances = val.size();

  std::filesystem::create_directories(opt.out_dir);
  const auto last_path = opt.out_dir / "last.lidk";
  const auto best_path = opt.out_dir / "best.lidk";
  const auto history_path = opt.out_dir / "history.csv";

  Trainer<float> trainer(build_model<float>(model_cfg, cfg.seed), std::move(train), std::move(val), cfg.train,
                         cfg.augment);
  if (opt.resume && std::filesystem::exists(last_path)) {
    auto last = load_checkpoint(last_path, &model_cfg);
    const json& st = last.train_state;
    if (!st.is_object() || !st.contains("trainer")) {
      throw CheckpointError(CheckpointError::Kind::kStructure, "last.lidk carries no training state");
    }
    if (!(st.at("run_config").get<RunConfig>().train == cfg.train)) {
      throw ConfigError("resume: training config differs from the interrupted run");
    }
    std::optional<Model<float>> best;
    if (std::filesystem::exists(best_path)) best = load_checkpoint(best_path, &model_cfg).model;
    trainer.restore(std::move(last.model), st.at("trainer").get<TrainState>(), std::move(best));
    log << "train: resumed at step " << trainer.state().step << "\n";
  }
  if (opt.split) {
    write_file_atomic(opt.out_dir / "split_train.jsonl", format_manifest(train_recs));
    write_file_atomic(opt.out_dir / "split_val.jsonl", format_manifest(val_recs));
  }
  log << "train: " << result.train_utterances << " train / " << result.val_utterances << " val utterances, "
      << labels.size() << " classes, " << trainer.total_steps() << " steps\n";

  trainer.set_epoch_hook([&](const Trainer<float>& t, const EpochRecord& rec, bool improved) {
    const json state = detail::checkpoint_state(cfg, t.state());
    if (improved) save_checkpoint(best_path, t.best_model(), state);
    save_checkpoint(last_path, t.model(), state);
    write_file_atomic(history_path, format_history_csv(t.state().history));
    log << "epoch " << rec.epoch << " lr " << rec.lr << " loss " << rec.train_loss << " val_top1 " << rec.val_top1
        << (improved ? " *" : "") << "\n";
  });
  trainer.run();
  if (!std::filesystem::exists(best_path)) save_checkpoint(best_path, trainer.best_model());
  result.state = trainer.state();
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

/// Maps an utterance to a predicted label; the default runs the model.
using Predictor = std::function<std::string(const ManifestRecord&, const FeatureMap&)>;

struct EvaluateOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path manifest;
  std::string taxonomy;  // empty: taken from the checkpoint's run config
  std::filesystem::path out_dir;
  FeatureConfig features;  // used when the checkpoint carries no run config
  // Test hook: replaces the model. `known_labels` must then be supplied.
  Predictor predictor;
  std::vector<std::string> known_labels;
  Level head_level = Level::kLanguage;
};

struct EvaluateReport {
  std::vector<AccuracyRow> accuracy;
  SplitConfusion confusion;
  std::size_t utterances = 0;
  std::size_t known_utterances = 0;
  std::size_t unknown_utterances = 0;
  std::vector<UtteranceFailure> failures;
  json document;
};

inline EvaluateReport cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  FeatureConfig features = opt.features;
  std::string taxonomy_path = opt.taxonomy;
  Level head = opt.head_level;
  std::vector<std::string> known = opt.known_labels;
  Predictor predictor = opt.predictor;
  std::optional<Model<float>> model;
  if (!predictor) {
    if (!opt.checkpoint) throw ConfigError("evaluate: a checkpoint is required");
    auto ck = load_checkpoint(*opt.checkpoint);
    if (ck.train_state.is_object() && ck.train_state.contains("run_config")) {
      const auto rc = ck.train_state.at("run_config").get<RunConfig>();
      features = rc.features;
      head = rc.label_level;
      if (taxonomy_path.empty()) taxonomy_path = rc.taxonomy;
    }
    model = std::move(ck.model);
    known = model->config.labels;
    predictor = [&](const ManifestRecord&, const FeatureMap& fm) {
      return model->config.labels[predict(*model, fm).label];
    };
  }
  if (known.empty()) throw ConfigError("evaluate: the known label set is empty");
  if (taxonomy_path.empty()) throw ConfigError("evaluate: a taxonomy is required");
  features.validate();
  const Taxonomy tx = Taxonomy::load(taxonomy_path);
  const auto records = load_manifest(opt.manifest);
  if (records.empty()) throw ManifestError("evaluation manifest has no records");

  EvaluateReport rep;
  auto feats = extract_features(records, features);
  rep.failures = feats.failures;
  for (const auto& f : rep.failures) log << "evaluate: skipping " << f.id << ": " << f.error << "\n";
  std::vector<std::string> preds, truth;
  for (std::size_t k = 0; k < feats.maps.size(); ++k) {
    const auto& rec = records[feats.record_index[k]];
    preds.push_back(predictor(rec, feats.maps[k]));
    truth.push_back(head == Level::kLanguage ? rec.label : tx.map(rec.label, head));
  }
  if (preds.empty()) throw ManifestError("no evaluation utterance could be featurized");
  rep.utterances = preds.size();
  rep.confusion = confusion(preds, truth, known);
  rep.known_utterances = rep.confusion.known.total();
  rep.unknown_utterances = rep.confusion.unknown.total();
  rep.accuracy = hierarchical_accuracy(preds, truth, known, tx, head);

  json rows = json::array();
  for (const auto& r : rep.accuracy) {
    json row = {{"task", level_name(r.level)}, {"correct", r.correct}, {"total", r.total}};
    row["top1_percent"] = r.available && r.total ? json(r.top1_percent()) : json(nullptr);
    rows.push_back(row);
  }
  json failures = rep.failures;
  rep.document = {{"utterances", rep.utterances},
                  {"known_utterances", rep.known_utterances},
                  {"unknown_utterances", rep.unknown_utterances},
                  {"head_level", level_name(head)},
                  {"known_labels", known},
                  {"accuracy", rows},
                  {"failures", failures},
                  {"confusion",
                   {{"known", "confusion_known.csv"},
                    {"known_percent", "confusion_known_percent.csv"},
                    {"unknown", "confusion_unknown.csv"},
                    {"unknown_percent", "confusion_unknown_percent.csv"}}}};

  std::filesystem::create_directories(opt.out_dir);
  write_file_atomic(opt.out_dir / "confusion_known.csv", rep.confusion.known.to_csv());
  write_file_atomic(opt.out_dir / "confusion_known_percent.csv", rep.confusion.known.to_percent_csv());
  write_file_atomic(opt.out_dir / "confusion_unknown.csv", rep.confusion.unknown.to_csv());
  write_file_atomic(opt.out_dir / "confusion_unknown_percent.csv", rep.confusion.unknown.to_percent_csv());
  write_file_atomic(opt.out_dir / "report.json", rep.document.dump(2) + "\n");
  for (const auto& r : rep.accuracy) {
    log << level_name(r.level) << ": ";
    if (r.available) {
      log << r.top1_percent() << "% (" << r.correct << "/" << r.total << ")\n";
    } else {
      log << "n/a\n";
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> wav;
  std::optional<std::filesystem::path> manifest;
  FeatureConfig features;  // used when the checkpoint carries no run config
};

struct PredictOutput {
  std::vector<json> records;  // one per utterance, in input order
  int exit_code = kExitOk;
};

inline PredictOutput cmd_predict(const PredictOptions& opt, std::ostream& log) {
  if (opt.wav.has_value() == opt.manifest.has_value()) throw ConfigError("predict: give exactly one of --wav or --manifest");
  auto ck = load_checkpoint(opt.checkpoint);
  FeatureConfig features = opt.features;
  if (ck.train_state.is_object() && ck.train_state.contains("run_config")) {
    features = ck.train_state.at("run_config").get<RunConfig>().features;
  }
  features.validate();
  std::vector<ManifestRecord> records;
  if (opt.wav) {
    records.push_back({opt.wav->string(), *opt.wav, "", std::nullopt});
  } else {
    records = load_manifest(*opt.manifest);
    if (records.empty()) throw ManifestError("manifest has no records");
  }
  const MfscExtractor extract(features);
  const auto& labels = ck.model.config.labels;
  PredictOutput out;
  for (const auto& rec : records) {
    try {
      const FeatureMap fm = extract(load_wav(rec.resolved.string(), rec.audio_filepath));
      const Prediction p = predict(ck.model, fm);
      json posterior = json::object();
      for (std::size_t k = 0; k < labels.size(); ++k) posterior[labels[k]] = p.posterior[k];
      out.records.push_back(
          {{"id", rec.audio_filepath}, {"label", labels[p.label]}, {"posterior", posterior}, {"attention", p.attention}});
    } catch (const std::exception& e) {
      log << "predict: " << rec.audio_filepath << ": " << e.what() << "\n";
      out.records.push_back({{"id", rec.audio_filepath}, {"error", e.what()}});
      out.exit_code = opt.wav ? kExitError : kExitPartial;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOutput {
  std::vector<GradCheckRow> rows;  // worst case per primitive over all seeds
  int exit_code = kExitOk;
};

inline GradcheckOutput cmd_gradcheck(std::uint64_t seed, std::size_t n_seeds, std::ostream& out) {
  if (n_seeds == 0) throw ConfigError("gradcheck: need at least one seed");
  GradcheckOutput g;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    auto rows = run_gradcheck_suite(seed + s);
    if (g.rows.empty()) {
      g.rows = std::move(rows);
      continue;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) g.rows[i].result.merge(rows[i].result);
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %14s %10s %8s %6s  %s\n", "primitive", "max_rel_error", "tolerance",
                "checked", "kinks", "status");
  out << line;
  for (const auto& r : g.rows) {
    std::snprintf(line, sizeof line, "%-18s %14.3e %10.0e %8zu %6zu  %s\n", r.name.c_str(), r.result.max_rel_error,
                  r.tolerance, r.result.checked, r.result.skipped_kinks, r.pass() ? "PASS" : "FAIL");
    out << line;
    if (!r.pass()) g.exit_code = kExitError;
  }
  return g;
}

}  // namespace lidsap
