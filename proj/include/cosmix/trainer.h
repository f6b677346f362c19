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

#ifndef COSMIX_TRAINER_H_
#define COSMIX_TRAINER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cosmix/audio_dataset.h"
#include "cosmix/autodiff.h"
#include "cosmix/model.h"
#include "cosmix/run_config.h"

namespace cosmix::train {

// Waveform access for manifest entries, either from an in-memory synthetic
// corpus or lazily from disk. Returned waveforms are padded/trimmed to
// 16000 samples.
class ClipSource {
 public:
  static ClipSource from_synthetic(const audio::SyntheticCorpus& corpus);
  static ClipSource from_manifest(audio::DatasetManifest manifest);

  const audio::DatasetManifest& manifest() const { return manifest_; }
  std::vector<double> waveform(std::size_t entry) const;

 private:
  audio::DatasetManifest manifest_;
  std::vector<std::vector<double>> in_memory_;  // empty for disk-backed sources
};

// Train split held in memory for batch composition.
struct TrainData {
  std::vector<std::size_t> entries;  // manifest indices
  std::vector<std::vector<double>> waves;
  std::vector<int> labels;

  static TrainData load(const ClipSource& source);
  std::size_t size() const { return entries.size(); }
};

// Unaugmented features of one split, [N, 98, 64] row-major.
struct FeatureSet {
  std::vector<float> feats;
  std::vector<int> labels;
  std::vector<std::string> paths;

  static FeatureSet extract(const ClipSource& source, audio::Split split);
  std::size_t size() const { return labels.size(); }
};

// Mixing decision for one batch row.
struct RowPlan {
  std::size_t source_i = 0;  // index into TrainData
  std::size_t source_j = 0;
  double lambda = 1.0;
  bool is_mixed = false;
};

struct MixedBatch {
  std::size_t size = 0;
  std::vector<double> feats_mix;  // [B, 98, 64]
  std::vector<double> feats_i;    // [B, 98, 64]; empty when views were not requested
  std::vector<double> feats_j;
  std::vector<double> y_i;  // [B, 10]
  std::vector<double> y_j;
  std::vector<double> lambdas;
  std::vector<std::uint8_t> is_mixed;
  std::vector<RowPlan> plan;
};

// Per row, with probability mix_ratio draws a partner j != i uniformly from
// the train set and lambda ~ Beta(alpha, alpha); otherwise j = i, lambda = 1.
// Row generators are keyed by (seed, epoch, batch, row).
std::vector<RowPlan> plan_batch(std::span<const std::size_t> anchors, std::size_t train_size,
                                const augment::BetaParams& beta, std::uint64_t seed,
                                std::uint64_t epoch, std::uint64_t batch);

// Mixes raw waveforms first, then runs time shift, time stretch, log-fbank
// and SpecAugment independently on each of the three views (mixed, i, j).
// The i/j views are skipped when `pre_mix_views` is false; the mixed view is
// identical either way.
MixedBatch compose_batch(const TrainData& data, std::span<const std::size_t> anchors,
                         const RunConfig& config, bool pre_mix_views, std::uint64_t epoch,
                         std::uint64_t batch);

struct LambdaWeight {
  double lambda_i = 1.0;
  std::optional<double> lambda_j;  // absent for unmixed rows
};
LambdaWeight lambda_weight(bool is_mixed, double lambda);

// Batch mean of lambda * CE(z, y_i) + (1 - lambda) * CE(z, y_j).
template <typename T>
ad::Tensor<T> loss_mix(const ad::Tensor<T>& logits, std::span<const double> y_i,
                       std::span<const double> y_j, std::span<const double> lambdas,
                       ClsLoss cls_loss);

// Per-row negative cosine similarity [B]. `proj_r` should already be behind
// stop_gradient.
template <typename T>
ad::Tensor<T> loss_cos(const ad::Tensor<T>& proj_mix, const ad::Tensor<T>& proj_r);

// How the pre-mixed projections are produced: on the same tape behind
// stop_gradient, or on a separate gradient-free tape and injected as
// constants. Both give the same gradients.
enum class TargetBranch { kStopGradient, kFrozenConstant };

template <typename T>
struct LossTerms {
  ad::Tensor<T> total;
  ad::Tensor<T> mix;
  ad::Tensor<T> cos;  // lambda-weighted batch mean of L_cos; invalid when beta == 0
  ad::Tensor<T> logits;
};

// L = L_mix + beta * mean_rows sum_r Lambda_r * L_cos(proj(mix), sg(proj(X_r))).
// Only the mixed view reaches the classifier.
template <typename T>
LossTerms<T> total_loss(ad::Tape<T>& tape, ad::ParameterSet<T>& params,
                        const model::ModelConfig& model, const MixedBatch& batch, double beta,
                        ClsLoss cls_loss, TargetBranch targets = TargetBranch::kStopGradient);

// Projections of the i and j views, [B, proj_dim] each, computed on a
// gradient-free tape.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> projection_targets(ad::ParameterSet<T>& params,
                                                             const model::ModelConfig& model,
                                                             const MixedBatch& batch);

// total_loss with the contrastive targets supplied as fixed values.
template <typename T>
LossTerms<T> total_loss_with_targets(ad::Tape<T>& tape, ad::ParameterSet<T>& params,
                                     const model::ModelConfig& model, const MixedBatch& batch,
                                     double beta, ClsLoss cls_loss, std::span<const T> proj_i,
                                     std::span<const T> proj_j);

double lr_at_epoch(std::size_t epoch, const TrainConfig& config);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const ad::ParameterSet<T>& params);
};

// One bias-corrected Adam update from the gradients stored in `params`.
template <typename T>
void adam_step(ad::ParameterSet<T>& params, AdamState<T>& state, double lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_mix = 0;
  double loss_cos = 0;
  double loss_total = 0;
  double train_acc = 0;
  double val_acc = 0;
  double lr = 0;
  double seconds = 0;

  std::string to_json() const;
};

struct EvalResult {
  double accuracy = 0;
  std::size_t total = 0;
  std::array<std::array<std::size_t, audio::kNumKeywords>, audio::kNumKeywords> confusion{};

  // Rows are true classes, columns predictions; comma separated.
  std::string confusion_csv() const;
};

// Argmax with ties to the lowest index.
EvalResult accuracy_from_logits(std::span<const float> logits, std::span<const int> labels);

EvalResult evaluate(const FeatureSet& split, ad::ParameterSet<float>& params,
                    const model::ModelConfig& model);

// One line per utterance: label index then the D embedding values.
void export_embeddings(const FeatureSet& split, ad::ParameterSet<float>& params,
                       const model::ModelConfig& model, const std::filesystem::path& path);

struct TrainOptions {
  // When set: config.txt, metrics.jsonl, timing.txt, last.ckpt, best.ckpt.
  std::optional<std::filesystem::path> run_dir;
  // Continue after the epoch stored in `resume` (its parameters and
  // optimizer state); `resume_best` restores best-checkpoint tracking.
  std::optional<model::Checkpoint> resume;
  std::optional<model::Checkpoint> resume_best;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<float> batch_losses;
  model::Checkpoint best;
  model::Checkpoint last;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
};

// Mean of all unaugmented log-mel values of the train split.
double mean_feature_value(const TrainData& data);

// With train.center_inputs the model's input offset is set from the train
// split first; checkpoints and config.txt carry the resolved value.
TrainResult train(const RunConfig& config, const ClipSource& data, const TrainOptions& options = {});

struct AblationCell {
  double mix_ratio = 0;
  double alpha = 0;
  Mode mode = Mode::kCosmix;
  std::optional<double> test_accuracy;  // empty if the cell failed
  std::string error;
};

// One independent run per (mix_ratio, alpha, mode). Seeds are keyed by the
// (mix_ratio, alpha) cell, so grid order does not matter and both modes of a
// cell share their data stream.
std::vector<AblationCell> run_ablation(const RunConfig& config, const ClipSource& data,
                                       std::span<const double> mix_ratios,
                                       std::span<const double> alphas, std::span<const Mode> modes);
std::uint64_t ablation_seed(std::uint64_t base_seed, double mix_ratio, double alpha);

// Rows by mix ratio; one column per (alpha, mode).
std::string format_ablation_table(const std::vector<AblationCell>& cells);

}  // namespace cosmix::train

#endif  // COSMIX_TRAINER_H_
