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


// lidsap command-line entry point: featurize, train, evaluate, predict,
// gradcheck. See README.md for the file formats.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lidsap/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

lidsap::RunConfig resolve_config(const Common& c) {
  lidsap::RunConfig cfg;
  if (!c.config.empty()) cfg = lidsap::load_run_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Seed for every random stream (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spoken language identification: MFSC features, separable-conv encoder, attentive pooling"};
  app.require_subcommand(1);

  Common featurize_common, train_common, eval_common, predict_common, grad_common;

  auto* featurize = app.add_subcommand("featurize", "Write one MFSC dump per manifest utterance");
  lidsap::FeaturizeOptions fo;
  std::string fo_manifest, fo_out;
  add_common(featurize, featurize_common);
  featurize->add_option("--manifest", fo_manifest, "JSON-lines manifest")->required();
  featurize->add_option("--out", fo_out, "Output directory")->required();
  featurize->add_flag("--allow-partial", fo.allow_partial, "Exit 0 when some utterances fail");

  auto* train = app.add_subcommand("train", "Train a classifier and write checkpoints plus history.csv");
  lidsap::TrainOptions to;
  std::string to_train, to_val, to_out;
  std::optional<double> to_split;
  add_common(train, train_common);
  train->add_option("--train", to_train, "Training manifest")->required();
  auto* val_opt = train->add_option("--val", to_val, "Validation manifest");
  train->add_option("--split", to_split, "Carve a validation set: train fraction, e.g. 0.8")->excludes(val_opt);
  train->add_option("--out", to_out, "Output directory")->required();
  train->add_flag("--resume", to.resume, "Continue from <out>/last.lidk");

  auto* evaluate = app.add_subcommand("evaluate", "Top-1 at language/genus/family plus confusion CSVs");
  lidsap::EvaluateOptions eo;
  std::string eo_ckpt, eo_manifest, eo_out;
  add_common(evaluate, eval_common);
  evaluate->add_option("--checkpoint", eo_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--manifest", eo_manifest, "Evaluation manifest")->required();
  evaluate->add_option("--taxonomy", eo.taxonomy, "language<TAB>genus<TAB>family file");
  evaluate->add_option("--out", eo_out, "Output directory")->required();

  auto* predictc = app.add_subcommand("predict", "Label, posterior and attention profile per utterance");
  lidsap::PredictOptions po;
  std::string po_ckpt, po_wav, po_manifest, po_out;
  add_common(predictc, predict_common);
  predictc->add_option("--checkpoint", po_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  auto* wav_opt = predictc->add_option("--wav", po_wav, "Single WAV file");
  predictc->add_option("--manifest", po_manifest, "JSON-lines manifest")->excludes(wav_opt);
  predictc->add_option("--out", po_out, "Write JSON lines here instead of stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  std::size_t n_seeds = 1;
  add_common(gradcheck, grad_common);
  gradcheck->add_option("--seeds", n_seeds, "Number of consecutive seeds to check")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*featurize) {
      fo.config = resolve_config(featurize_common);
      fo.manifest = fo_manifest;
      fo.out_dir = fo_out;
      return lidsap::cmd_featurize(fo, std::cerr).exit_code;
    }
    if (*train) {
      to.config = resolve_config(train_common);
      to.train_manifest = to_train;
      if (!to_val.empty()) to.val_manifest = to_val;
      to.split = to_split;
      to.out_dir = to_out;
      lidsap::cmd_train(to, std::cerr);
      return lidsap::kExitOk;
    }
    if (*evaluate) {
      const auto cfg = resolve_config(eval_common);
      eo.features = cfg.features;
      if (eo.taxonomy.empty()) eo.taxonomy = cfg.taxonomy;
      eo.checkpoint = eo_ckpt;
      eo.manifest = eo_manifest;
      eo.out_dir = eo_out;
      const auto rep = lidsap::cmd_evaluate(eo, std::cerr);
      std::cout << rep.document.dump(2) << "\n";
      return lidsap::kExitOk;
    }
    if (*predictc) {
      po.features = resolve_config(predict_common).features;
      po.checkpoint = po_ckpt;
      if (!po_wav.empty()) po.wav = po_wav;
      if (!po_manifest.empty()) po.manifest = po_manifest;
      const auto out = lidsap::cmd_predict(po, std::cerr);
      std::string text;
      for (const auto& r : out.records) text += r.dump() + "\n";
      if (po_out.empty()) {
        std::cout << text;
      } else {
        lidsap::write_file_atomic(po_out, text);
      }
      return out.exit_code;
    }
    if (*gradcheck) {
      const auto cfg = resolve_config(grad_common);
      return lidsap::cmd_gradcheck(cfg.seed, n_seeds, std::cout).exit_code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lidsap::kExitError;
  }
  return lidsap::kExitError;
}
