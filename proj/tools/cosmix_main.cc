// Copyright (c) 2026 The cosmix-kws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cosmix/audio_dataset.h"
#include "cosmix/autodiff.h"
#include "cosmix/errors.h"
#include "cosmix/model.h"
#include "cosmix/run_config.h"
#include "cosmix/trainer.h"
#include "cosmix/util.h"
#include "cosmix/verify.h"

namespace fs = std::filesystem;
using namespace cosmix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Args {
  std::string data_root;
  std::string manifest;
  std::string config;
  std::string mode;
  std::string run_dir;
  std::string checkpoint;
  std::string output;
  std::string split = "test";
  double fraction = 1.0;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> synthetic;
  double noise = 0.3;
  bool force = false;
  bool resume = false;
  std::string ratios = "0.1,0.3,0.5,0.7,1.0";
  std::string alphas = "0.5,10";
  std::string modes = "mixup,cosmix";
};

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto t = std::string(trim(part));
    if (t.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw InvalidArgument("not a number: " + t);
    out.push_back(v);
  }
  return out;
}

train::RunConfig resolve_config(const Args& a) {
  train::RunConfig cfg = a.config.empty() ? train::RunConfig{} : train::RunConfig::load(a.config);
  if (!a.mode.empty()) cfg.mode = train::mode_from_string(a.mode);
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.model.init_seed = *a.seed;
  }
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.validate();
  return cfg;
}

train::ClipSource load_source(const Args& a) {
  if (a.manifest.empty()) throw InvalidArgument("--manifest is required");
  return train::ClipSource::from_manifest(audio::read_manifest(a.manifest));
}

int cmd_prepare(const Args& a) {
  if (a.data_root.empty()) throw InvalidArgument("--data-root is required");
  if (a.manifest.empty()) throw InvalidArgument("--manifest is required");
  const fs::path root = a.data_root;
  const std::uint64_t seed = a.seed.value_or(0);
  if (a.synthetic) {
    if (fs::exists(root) && !fs::is_empty(root)) {
      throw InvalidArgument("synthetic corpus target is not empty: " + root.string());
    }
    audio::write_corpus(audio::synth_dataset(*a.synthetic, a.noise, seed), root);
  }
  const auto full =
      audio::build_manifest(root, root / "validation_list.txt", root / "testing_list.txt");
  const auto trimmed = audio::trim_by_speaker(full, a.fraction, seed);

  std::array<double, audio::kNumKeywords> seconds{};
  for (std::size_t e : trimmed.indices(audio::Split::kTrain)) {
    const auto& entry = trimmed.entries[e];
    seconds[static_cast<std::size_t>(entry.label.index())] +=
        static_cast<double>(audio::read_pcm16(entry.path).size()) / audio::kSampleRate;
  }
  audio::write_manifest(a.manifest, trimmed);

  const auto counts = trimmed.per_keyword_count(audio::Split::kTrain);
  std::printf("keyword  train_utterances  minutes\n");
  for (std::size_t k = 0; k < audio::kNumKeywords; ++k) {
    std::printf("%-8s %16zu %8.2f\n", std::string(audio::kKeywords[k]).c_str(), counts[k],
                seconds[k] / 60.0);
  }
  std::printf("validation %zu, test %zu, skipped non-keyword files %zu\n",
              trimmed.count(audio::Split::kValidation), trimmed.count(audio::Split::kTest),
              trimmed.skipped_files);
  return kExitOk;
}

int cmd_train(const Args& a) {
  if (a.run_dir.empty()) throw InvalidArgument("--run-dir is required");
  const fs::path run_dir = a.run_dir;
  train::TrainOptions options;
  options.run_dir = run_dir;
  train::RunConfig cfg;
  if (a.resume) {
    const fs::path last = run_dir / "last.ckpt";
    if (!fs::exists(last)) throw InvalidArgument("nothing to resume in " + run_dir.string());
    Args from_dir = a;
    from_dir.config = (run_dir / "config.txt").string();
    cfg = resolve_config(from_dir);
    options.resume = model::load_checkpoint(last);
    if (fs::exists(run_dir / "best.ckpt")) options.resume_best = model::load_checkpoint(run_dir / "best.ckpt");
  } else {
    cfg = resolve_config(a);
    if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
      if (!a.force) {
        throw InvalidArgument("run directory exists: " + run_dir.string() + " (use --force)");
      }
      for (const char* name : {"metrics.jsonl", "timing.txt", "last.ckpt", "best.ckpt", "config.txt"}) {
        fs::remove(run_dir / name);
      }
    }
  }
  const auto source = load_source(a);
  options.on_epoch = [](const train::EpochMetrics& m) {
    std::printf("epoch %zu loss %.4f (mix %.4f cos %.4f) train_acc %.4f val_acc %.4f lr %.6f\n", m.epoch,
                m.loss_total, m.loss_mix, m.loss_cos, m.train_acc, m.val_acc, m.lr);
    std::fflush(stdout);
  };
  const auto result = train::train(cfg, source, options);
  std::printf("best val_acc %.4f at epoch %zu\n", result.best_val_acc, result.best_epoch);
  return kExitOk;
}

struct LoadedModel {
  model::Checkpoint checkpoint;
  model::ModelConfig config;
};

LoadedModel load_model(const Args& a) {
  if (a.checkpoint.empty()) throw InvalidArgument("--checkpoint is required");
  LoadedModel m{model::load_checkpoint(a.checkpoint), {}};
  m.config = m.checkpoint.model_config();
  if (!a.config.empty()) {
    const auto cfg = train::RunConfig::load(a.config);
    if (!(cfg.model == m.config)) throw CheckpointError("checkpoint does not match the model in " + a.config);
  }
  model::check_params(m.checkpoint.params, m.config);
  return m;
}

int cmd_eval(const Args& a) {
  auto m = load_model(a);
  const auto split = audio::split_from_string(a.split);
  const auto feats = train::FeatureSet::extract(load_source(a), split);
  const auto result = train::evaluate(feats, m.checkpoint.params, m.config);
  std::printf("accuracy %.4f (%zu utterances, split %s)\n", result.accuracy, result.total, a.split.c_str());
  if (!a.output.empty()) {
    write_file_atomic(a.output, result.confusion_csv());
  } else {
    std::fputs(result.confusion_csv().c_str(), stdout);
  }
  return kExitOk;
}

int cmd_export(const Args& a) {
  if (a.output.empty()) throw InvalidArgument("--output is required");
  auto m = load_model(a);
  const auto feats = train::FeatureSet::extract(load_source(a), audio::split_from_string(a.split));
  train::export_embeddings(feats, m.checkpoint.params, m.config, a.output);
  std::printf("wrote %zu embeddings to %s\n", feats.size(), a.output.c_str());
  return kExitOk;
}

int cmd_ablate(const Args& a) {
  const auto cfg = resolve_config(a);
  const auto ratios = parse_doubles(a.ratios);
  const auto alphas = parse_doubles(a.alphas);
  std::vector<train::Mode> modes;
  for (const auto& m : split(a.modes, ',')) {
    if (!trim(m).empty()) modes.push_back(train::mode_from_string(trim(m)));
  }
  const auto cells = train::run_ablation(cfg, load_source(a), ratios, alphas, modes);
  for (const auto& c : cells) {
    if (!c.test_accuracy) {
      std::fprintf(stderr, "cell mix_ratio=%g alpha=%g mode=%s failed: %s\n", c.mix_ratio, c.alpha,
                   std::string(train::to_string(c.mode)).c_str(), c.error.c_str());
    }
  }
  const std::string table = train::format_ablation_table(cells);
  if (!a.output.empty()) write_file_atomic(a.output, table);
  std::fputs(table.c_str(), stdout);
  return kExitOk;
}

int cmd_verify() {
  if (const char* fault = std::getenv("COSMIX_GRADIENT_FAULT")) ad::set_gradient_fault(fault);
  const auto report = verify::run_verification([](const verify::SuiteResult& s) {
    verify::Report one;
    one.suites.push_back(s);
    std::fputs(one.to_text().c_str(), stdout);
    std::fflush(stdout);
  });
  if (report.passed()) {
    std::printf("verification passed (%zu suites)\n", report.suites.size());
    return kExitOk;
  }
  std::string failed;
  for (const auto& s : report.suites) {
    if (!s.passed) failed += (failed.empty() ? "" : ", ") + s.name;
  }
  std::printf("verification FAILED: %s\n", failed.c_str());
  return kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosmix: keyword spotting with mixup and a contrastive mixing loss"};
  app.require_subcommand(1);
  Args a;

  auto* prepare = app.add_subcommand("prepare", "Build a (trimmed) dataset manifest");
  prepare->add_option("--data-root", a.data_root, "Speech Commands style dataset root")->required();
  prepare->add_option("--manifest", a.manifest, "Output manifest path")->required();
  prepare->add_option("--fraction", a.fraction, "Fraction of train utterances kept per keyword");
  prepare->add_option("--seed", a.seed, "Speaker shuffle seed");
  prepare->add_option("--synthetic", a.synthetic, "First write a synthetic corpus with N clips per keyword");
  prepare->add_option("--noise", a.noise, "Noise level of the synthetic corpus");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", a.manifest, "Dataset manifest")->required();
    sub->add_option("--config", a.config, "Run config (key = value)");
  };
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd);
  train_cmd->add_option("--run-dir", a.run_dir, "Output run directory")->required();
  train_cmd->add_option("--mode", a.mode, "baseline | mixup | cosmix");
  train_cmd->add_option("--seed", a.seed, "Training seed");
  train_cmd->add_option("--epochs", a.epochs, "Number of epochs");
  train_cmd->add_flag("--force", a.force, "Overwrite an existing run directory");
  train_cmd->add_flag("--resume", a.resume, "Continue from <run-dir>/last.ckpt");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", a.split, "train | validation | test");
  eval->add_option("--output", a.output, "Confusion matrix output (CSV)");

  auto* exp = app.add_subcommand("export-embeddings", "Write encoder embeddings of a split");
  add_common(exp);
  exp->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  exp->add_option("--split", a.split, "train | validation | test");
  exp->add_option("--output", a.output, "Output text file")->required();

  auto* ablate = app.add_subcommand("ablate", "Mix ratio x alpha sweep");
  add_common(ablate);
  ablate->add_option("--ratios", a.ratios, "Comma separated mix ratios");
  ablate->add_option("--alphas", a.alphas, "Comma separated Beta alphas");
  ablate->add_option("--modes", a.modes, "Comma separated modes");
  ablate->add_option("--seed", a.seed, "Base seed");
  ablate->add_option("--epochs", a.epochs, "Epochs per cell");
  ablate->add_option("--output", a.output, "Table output path");

  auto* verify_cmd = app.add_subcommand("verify", "Run the numerical verification suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) return cmd_prepare(a);
    if (*train_cmd) return cmd_train(a);
    if (*eval) return cmd_eval(a);
    if (*exp) return cmd_export(a);
    if (*ablate) return cmd_ablate(a);
    if (*verify_cmd) return cmd_verify();
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
