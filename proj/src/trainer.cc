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

#include "cosmix/trainer.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "cosmix/augment.h"
#include "cosmix/errors.h"
#include "cosmix/features.h"
#include "cosmix/util.h"

namespace cosmix::train {

namespace {

constexpr std::size_t kFeatSize = features::kFrames * features::kMelBins;
constexpr std::size_t kK = audio::kNumKeywords;
constexpr std::uint64_t kPlanStream = 0;
constexpr std::uint64_t kViewStream = 1;
constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;

const features::FBankExtractor& extractor() {
  static const features::FBankExtractor fbank{features::FBankSpec{}};
  return fbank;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data access

ClipSource ClipSource::from_synthetic(const audio::SyntheticCorpus& corpus) {
  ClipSource src;
  src.manifest_ = corpus.manifest;
  for (const auto& clip : corpus.clips) src.in_memory_.push_back(audio::pad_or_trim(clip.samples));
  return src;
}

ClipSource ClipSource::from_manifest(audio::DatasetManifest manifest) {
  ClipSource src;
  src.manifest_ = std::move(manifest);
  return src;
}

std::vector<double> ClipSource::waveform(std::size_t entry) const {
  if (!in_memory_.empty()) return in_memory_.at(entry);
  return audio::pad_or_trim(audio::load_wav(manifest_.entries.at(entry).path).samples);
}

TrainData TrainData::load(const ClipSource& source) {
  TrainData data;
  data.entries = source.manifest().indices(audio::Split::kTrain);
  for (std::size_t e : data.entries) {
    data.waves.push_back(source.waveform(e));
    data.labels.push_back(source.manifest().entries[e].label.index());
  }
  return data;
}

FeatureSet FeatureSet::extract(const ClipSource& source, audio::Split split) {
  FeatureSet set;
  for (std::size_t e : source.manifest().indices(split)) {
    const auto feat = extractor().compute(source.waveform(e));
    for (double v : feat.values.values) set.feats.push_back(static_cast<float>(v));
    set.labels.push_back(source.manifest().entries[e].label.index());
    set.paths.push_back(source.manifest().entries[e].path);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Batch composition

std::vector<RowPlan> plan_batch(std::span<const std::size_t> anchors, std::size_t train_size,
                                const augment::BetaParams& beta, std::uint64_t seed,
                                std::uint64_t epoch, std::uint64_t batch) {
  beta.validate();
  if (train_size < 2) throw DatasetError("batch composition needs at least 2 train entries");
  std::vector<RowPlan> plan(anchors.size());
  for (std::size_t r = 0; r < anchors.size(); ++r) {
    Rng rng = counter_rng(seed, {epoch, batch, r, kPlanStream});
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    RowPlan& row = plan[r];
    row.source_i = row.source_j = anchors[r];
    if (coin(rng) < beta.mix_ratio) {
      std::uniform_int_distribution<std::size_t> partner(0, train_size - 2);
      std::size_t j = partner(rng);
      if (j >= anchors[r]) ++j;
      row.source_j = j;
      row.lambda = augment::sample_beta(beta, rng);
      row.is_mixed = true;
    }
  }
  return plan;
}

namespace {

void render_view(std::span<const double> wave, const augment::AugmentConfig& cfg, Rng& rng,
                 double* out) {
  auto shifted = augment::time_shift(wave, cfg, rng);
  auto stretched = augment::time_stretch(shifted, cfg, rng);
  auto feat = augment::spec_augment(extractor().compute(stretched), cfg, rng);
  std::copy(feat.values.values.begin(), feat.values.values.end(), out);
}

}  // namespace

MixedBatch compose_batch(const TrainData& data, std::span<const std::size_t> anchors,
                         const RunConfig& config, bool pre_mix_views, std::uint64_t epoch,
                         std::uint64_t batch) {
  const std::size_t B = anchors.size();
  MixedBatch out;
  out.size = B;
  out.plan = plan_batch(anchors, data.size(), config.train.beta_params, config.train.seed, epoch, batch);
  out.feats_mix.resize(B * kFeatSize);
  if (pre_mix_views) {
    out.feats_i.resize(B * kFeatSize);
    out.feats_j.resize(B * kFeatSize);
  }
  out.y_i.assign(B * kK, 0.0);
  out.y_j.assign(B * kK, 0.0);
  out.lambdas.resize(B);
  out.is_mixed.resize(B);
  for (std::size_t r = 0; r < B; ++r) {
    const RowPlan& row = out.plan[r];
    const auto& xi = data.waves[row.source_i];
    const auto& xj = data.waves[row.source_j];
    out.y_i[r * kK + static_cast<std::size_t>(data.labels[row.source_i])] = 1.0;
    out.y_j[r * kK + static_cast<std::size_t>(data.labels[row.source_j])] = 1.0;
    out.lambdas[r] = row.lambda;
    out.is_mixed[r] = row.is_mixed ? 1 : 0;

    Rng rng = counter_rng(config.train.seed, {epoch, batch, r, kViewStream});
    if (row.is_mixed) {
      render_view(augment::mixup_waveforms(xi, xj, row.lambda), config.augment, rng,
                  &out.feats_mix[r * kFeatSize]);
    } else {
      render_view(xi, config.augment, rng, &out.feats_mix[r * kFeatSize]);
    }
    if (pre_mix_views) {
      render_view(xi, config.augment, rng, &out.feats_i[r * kFeatSize]);
      render_view(xj, config.augment, rng, &out.feats_j[r * kFeatSize]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

LambdaWeight lambda_weight(bool is_mixed, double lambda) {
  if (!is_mixed) return LambdaWeight{1.0, std::nullopt};
  return LambdaWeight{lambda, 1.0 - lambda};
}

template <typename T>
ad::Tensor<T> loss_mix(const ad::Tensor<T>& logits, std::span<const double> y_i,
                       std::span<const double> y_j, std::span<const double> lambdas,
                       ClsLoss cls_loss) {
  if (logits.shape().size() != 2) throw ShapeError("loss_mix: logits must be [B, K]");
  const std::size_t B = logits.shape()[0], K = logits.shape()[1];
  if (y_i.size() != B * K || y_j.size() != B * K || lambdas.size() != B) {
    throw ShapeError("loss_mix: label/lambda sizes do not match logits " + ad::to_string(logits.shape()));
  }
  std::vector<T> w_i(B), w_j(B);
  for (std::size_t r = 0; r < B; ++r) {
    if (!(lambdas[r] >= 0 && lambdas[r] <= 1)) throw InvalidInput("loss_mix: lambda outside [0, 1]");
    w_i[r] = static_cast<T>(lambdas[r]);
    w_j[r] = static_cast<T>(1.0 - lambdas[r]);
  }
  auto& tape = logits.tape();
  auto Yi = tape.constant({B, K}, std::vector<T>(y_i.begin(), y_i.end()));
  auto Yj = tape.constant({B, K}, std::vector<T>(y_j.begin(), y_j.end()));
  auto rows = [&](const ad::Tensor<T>& Y) {
    return cls_loss == ClsLoss::kSoftmaxCE ? ad::cross_entropy_rows(logits, Y)
                                           : ad::sigmoid_bce_rows(logits, Y);
  };
  auto weighted = ad::add(ad::weighted_sum(rows(Yi), std::span<const T>(w_i)),
                          ad::weighted_sum(rows(Yj), std::span<const T>(w_j)));
  return ad::scale(weighted, T(1) / static_cast<T>(B));
}

template <typename T>
ad::Tensor<T> loss_cos(const ad::Tensor<T>& proj_mix, const ad::Tensor<T>& proj_r) {
  return ad::scale(ad::cosine_similarity(proj_mix, proj_r), T(-1));
}

namespace {

template <typename T>
ad::Tensor<T> feature_tensor(ad::Tape<T>& tape, const std::vector<double>& v, std::size_t B) {
  if (v.size() != B * kFeatSize) throw ShapeError("total_loss: feature buffer has wrong size");
  return tape.constant({B, features::kFrames, features::kMelBins}, std::vector<T>(v.begin(), v.end()));
}

// `target(feats)` yields the stop-gradient projection of a pre-mixed view.
template <typename T, typename TargetFn>
LossTerms<T> assemble_loss(ad::Tape<T>& tape, ad::ParameterSet<T>& params,
                           const model::ModelConfig& model, const MixedBatch& batch, double beta,
                           ClsLoss cls_loss, TargetFn&& target) {
  const std::size_t B = batch.size;
  LossTerms<T> terms;
  auto emb = model::encoder_forward(tape, feature_tensor(tape, batch.feats_mix, B), params, model);
  terms.logits = model::classifier_forward(tape, emb, params, model);
  terms.mix = loss_mix(terms.logits, batch.y_i, batch.y_j, batch.lambdas, cls_loss);
  if (beta == 0.0) {
    terms.total = terms.mix;
    return terms;
  }
  if (batch.feats_i.empty() || batch.feats_j.empty()) {
    throw ContractError("total_loss: contrastive term needs the pre-mixed views");
  }
  auto proj_mix = model::projector_forward(tape, emb, params, model);
  auto proj_i = target(0);
  auto proj_j = target(1);

  std::vector<T> w_i(B), w_j(B);
  for (std::size_t r = 0; r < B; ++r) {
    const LambdaWeight w = lambda_weight(batch.is_mixed[r] != 0, batch.lambdas[r]);
    w_i[r] = static_cast<T>(w.lambda_i);
    w_j[r] = static_cast<T>(w.lambda_j.value_or(0.0));
  }
  auto weighted = ad::add(ad::weighted_sum(loss_cos(proj_mix, proj_i), std::span<const T>(w_i)),
                          ad::weighted_sum(loss_cos(proj_mix, proj_j), std::span<const T>(w_j)));
  terms.cos = ad::scale(weighted, T(1) / static_cast<T>(B));
  terms.total = ad::add(terms.mix, ad::scale(terms.cos, static_cast<T>(beta)));
  return terms;
}

}  // namespace

template <typename T>
std::pair<std::vector<T>, std::vector<T>> projection_targets(ad::ParameterSet<T>& params,
                                                             const model::ModelConfig& model,
                                                             const MixedBatch& batch) {
  auto project = [&](const std::vector<double>& feats) {
    ad::Tape<T> frozen;
    frozen.set_grad_enabled(false);
    auto e = model::encoder_forward(frozen, feature_tensor(frozen, feats, batch.size), params, model);
    auto p = model::projector_forward(frozen, e, params, model);
    return std::vector<T>(p.values().begin(), p.values().end());
  };
  return {project(batch.feats_i), project(batch.feats_j)};
}

template <typename T>
LossTerms<T> total_loss_with_targets(ad::Tape<T>& tape, ad::ParameterSet<T>& params,
                                     const model::ModelConfig& model, const MixedBatch& batch,
                                     double beta, ClsLoss cls_loss, std::span<const T> proj_i,
                                     std::span<const T> proj_j) {
  const ad::Shape shape{batch.size, model.proj_dim};
  if (beta != 0.0 && (proj_i.size() != ad::numel(shape) || proj_j.size() != ad::numel(shape))) {
    throw ShapeError("total_loss: targets must be " + ad::to_string(shape));
  }
  return assemble_loss(tape, params, model, batch, beta, cls_loss, [&](int branch) {
    auto v = branch == 0 ? proj_i : proj_j;
    return ad::stop_gradient(tape.constant(shape, std::vector<T>(v.begin(), v.end())));
  });
}

template <typename T>
LossTerms<T> total_loss(ad::Tape<T>& tape, ad::ParameterSet<T>& params,
                        const model::ModelConfig& model, const MixedBatch& batch, double beta,
                        ClsLoss cls_loss, TargetBranch targets) {
  if (targets == TargetBranch::kFrozenConstant && beta != 0.0) {
    if (batch.feats_i.empty() || batch.feats_j.empty()) {
      throw ContractError("total_loss: contrastive term needs the pre-mixed views");
    }
    const auto [pi, pj] = projection_targets(params, model, batch);
    return total_loss_with_targets<T>(tape, params, model, batch, beta, cls_loss, pi, pj);
  }
  return assemble_loss(tape, params, model, batch, beta, cls_loss, [&](int branch) {
    const auto& feats = branch == 0 ? batch.feats_i : batch.feats_j;
    auto e = model::encoder_forward(tape, feature_tensor(tape, feats, batch.size), params, model);
    return ad::stop_gradient(model::projector_forward(tape, e, params, model));
  });
}

// ---------------------------------------------------------------------------
// Optimisation

double lr_at_epoch(std::size_t epoch, const TrainConfig& config) {
  if (epoch < 1) throw InvalidArgument("lr_at_epoch: epochs are 1-based");
  std::size_t decays = 0;
  for (std::size_t p = config.decay_start_epoch; p <= config.decay_end_epoch && p <= epoch;
       p += config.decay_every) {
    ++decays;
  }
  return config.lr0 * std::pow(config.decay_rate, static_cast<double>(decays));
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ad::ParameterSet<T>& params) {
  AdamState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), T(0));
    s.v.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(ad::ParameterSet<T>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter set");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    ++k;
    if (m.size() != p.value.size() || v.size() != p.value.size()) {
      throw ContractError("adam_step: moment shape mismatch for " + p.name);
    }
    if (p.grad.empty()) continue;
    if (p.grad.size() != p.value.size()) throw ContractError("adam_step: gradient shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      p.value[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Metrics and evaluation

std::string EpochMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss_mix"] = loss_mix;
  j["loss_cos"] = loss_cos;
  j["loss_total"] = loss_total;
  j["train_acc"] = train_acc;
  j["val_acc"] = val_acc;
  j["lr"] = lr;
  j["seconds"] = seconds;
  return j.dump();
}

std::string EvalResult::confusion_csv() const {
  std::string out;
  for (const auto& row : confusion) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += std::to_string(row[c]);
    }
    out += '\n';
  }
  return out;
}

EvalResult accuracy_from_logits(std::span<const float> logits, std::span<const int> labels) {
  if (labels.empty()) throw InvalidInput("evaluate: empty split");
  if (logits.size() != labels.size() * kK) throw ShapeError("evaluate: logits do not match labels");
  EvalResult result;
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const float* row = logits.data() + n * kK;
    const auto pred = static_cast<std::size_t>(std::max_element(row, row + kK) - row);
    const auto truth = static_cast<std::size_t>(labels[n]);
    ++result.confusion[truth][pred];
    if (pred == truth) ++correct;
  }
  result.total = labels.size();
  result.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return result;
}

namespace {

constexpr std::size_t kEvalChunk = 128;

// Runs `fn(embedding, logits)` for each chunk of the split.
template <typename Fn>
void forward_chunks(const FeatureSet& split, ad::ParameterSet<float>& params,
                    const model::ModelConfig& model, Fn&& fn) {
  model::check_params(params, model);
  for (std::size_t start = 0; start < split.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, split.size() - start);
    ad::Tape<float> tape;
    tape.set_grad_enabled(false);
    std::vector<float> buf(split.feats.begin() + static_cast<std::ptrdiff_t>(start * kFeatSize),
                           split.feats.begin() + static_cast<std::ptrdiff_t>((start + n) * kFeatSize));
    auto x = tape.constant({n, features::kFrames, features::kMelBins}, std::move(buf));
    auto emb = model::encoder_forward(tape, x, params, model);
    auto logits = model::classifier_forward(tape, emb, params, model);
    fn(emb, logits);
  }
}

}  // namespace

EvalResult evaluate(const FeatureSet& split, ad::ParameterSet<float>& params,
                    const model::ModelConfig& model) {
  if (split.size() == 0) throw InvalidInput("evaluate: empty split");
  std::vector<float> logits;
  forward_chunks(split, params, model, [&](const ad::Tensor<float>&, const ad::Tensor<float>& z) {
    logits.insert(logits.end(), z.values().begin(), z.values().end());
  });
  return accuracy_from_logits(logits, split.labels);
}

void export_embeddings(const FeatureSet& split, ad::ParameterSet<float>& params,
                       const model::ModelConfig& model, const std::filesystem::path& path) {
  if (split.size() == 0) throw InvalidInput("export_embeddings: empty split");
  std::string out;
  std::size_t n = 0;
  forward_chunks(split, params, model, [&](const ad::Tensor<float>& emb, const ad::Tensor<float>&) {
    const std::size_t D = emb.shape()[1];
    for (std::size_t r = 0; r < emb.shape()[0]; ++r, ++n) {
      out += std::to_string(split.labels[n]);
      for (std::size_t d = 0; d < D; ++d) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), emb.values()[r * D + d]);
        out += ',';
        out.append(buf, res.ptr);
      }
      out += '\n';
    }
  });
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

model::Checkpoint snapshot(const RunConfig& config, const ad::ParameterSet<float>& params,
                           const AdamState<float>& adam, std::size_t epoch,
                           const EpochMetrics& metrics) {
  model::Checkpoint ck;
  ck.config_text = config.to_text();
  ck.params = params;
  ck.epoch = static_cast<std::uint32_t>(epoch);
  ck.rng_state = "counter;seed=" + std::to_string(config.train.seed) +
                 ";next_epoch=" + std::to_string(epoch + 1);
  ck.metrics_tail = metrics.to_json();
  std::size_t k = 0;
  for (const auto& p : params) {
    ck.optimizer_state.add("m/" + p.name, p.shape).value = adam.m[k];
    ck.optimizer_state.add("v/" + p.name, p.shape).value = adam.v[k];
    ++k;
  }
  ck.optimizer_step = adam.t;
  return ck;
}

AdamState<float> restore_adam(const model::Checkpoint& ck, const ad::ParameterSet<float>& params) {
  AdamState<float> adam = AdamState<float>::zeros_like(params);
  std::size_t k = 0;
  for (const auto& p : params) {
    const auto& m = ck.optimizer_state.at("m/" + p.name);
    const auto& v = ck.optimizer_state.at("v/" + p.name);
    if (m.value.size() != p.value.size() || v.value.size() != p.value.size()) {
      throw CheckpointError("optimizer state shape mismatch for " + p.name);
    }
    adam.m[k] = m.value;
    adam.v[k] = v.value;
    ++k;
  }
  adam.t = ck.optimizer_step;
  return adam;
}

}  // namespace

double mean_feature_value(const TrainData& data) {
  if (data.size() == 0) throw DatasetError("no train entries to take the feature mean from");
  double sum = 0.0;
  for (const auto& wave : data.waves) {
    for (double v : extractor().compute(wave).values.values) sum += v;
  }
  return sum / static_cast<double>(data.size() * kFeatSize);
}

TrainResult train(const RunConfig& requested, const ClipSource& data, const TrainOptions& options) {
  requested.validate();
  const TrainData train_data = TrainData::load(data);
  if (train_data.size() < 2) throw DatasetError("training needs at least 2 train entries");
  RunConfig config_in = requested;
  if (config_in.train.center_inputs) config_in.model.input_offset = mean_feature_value(train_data);
  const RunConfig cfg = effective_config(config_in);
  const FeatureSet validation = FeatureSet::extract(data, audio::Split::kValidation);
  const bool contrastive = cfg.train.beta_penalty > 0.0;

  TrainResult result;
  ad::ParameterSet<float> params = model::init_params<float>(cfg.model);
  AdamState<float> adam = AdamState<float>::zeros_like(params);
  std::size_t start_epoch = 1;
  if (options.resume) {
    const model::Checkpoint& ck = *options.resume;
    if (ck.model_config() != cfg.model) throw CheckpointError("resume checkpoint has a different model config");
    model::check_params(ck.params, cfg.model);
    params = ck.params;
    adam = restore_adam(ck, params);
    start_epoch = ck.epoch + 1;
    result.last = ck;
    if (options.resume_best) {
      result.best = *options.resume_best;
      result.best_epoch = options.resume_best->epoch;
      result.best_val_acc =
          nlohmann::json::parse(options.resume_best->metrics_tail).at("val_acc").get<double>();
    }
  }

  std::ofstream metrics_out, timing_out;
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    write_file_atomic(*options.run_dir / "config.txt", config_in.to_text());
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    metrics_out.open(*options.run_dir / "metrics.jsonl", std::ios::out | mode);
    timing_out.open(*options.run_dir / "timing.txt", std::ios::out | mode);
    if (!metrics_out || !timing_out) throw IoError("cannot open metrics files in " + options.run_dir->string());
  }

  const std::size_t N = train_data.size();
  const std::size_t B = cfg.train.batch_size;
  for (std::size_t epoch = start_epoch; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, cfg.train);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = counter_rng(cfg.train.seed, {epoch, kShuffleTag});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_mix = 0, sum_cos = 0, sum_total = 0;
    std::size_t correct = 0;
    const std::size_t n_batches = (N + B - 1) / B;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::span<const std::size_t> anchors(order.data() + b * B, std::min(B, N - b * B));
      try {
        const MixedBatch batch = compose_batch(train_data, anchors, cfg, contrastive, epoch, b);
        params.zero_grad();
        ad::Tape<float> tape;
        LossTerms<float> terms = total_loss(tape, params, cfg.model, batch, cfg.train.beta_penalty,
                                            cfg.train.cls_loss, TargetBranch::kFrozenConstant);
        tape.backward(terms.total);
        adam_step(params, adam, lr);

        const double rows = static_cast<double>(batch.size);
        sum_mix += terms.mix.item() * rows;
        sum_cos += (terms.cos.valid() ? terms.cos.item() : 0.0) * rows;
        sum_total += terms.total.item() * rows;
        result.batch_losses.push_back(terms.total.item());
        auto z = terms.logits.values();
        for (std::size_t r = 0; r < batch.size; ++r) {
          const float* row = z.data() + r * kK;
          const auto pred = static_cast<std::size_t>(std::max_element(row, row + kK) - row);
          const RowPlan& plan = batch.plan[r];
          const std::size_t dominant = plan.lambda >= 0.5 ? plan.source_i : plan.source_j;
          if (pred == static_cast<std::size_t>(train_data.labels[dominant])) ++correct;
        }
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                           e.what());
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss_mix = sum_mix / static_cast<double>(N);
    m.loss_cos = sum_cos / static_cast<double>(N);
    m.loss_total = sum_total / static_cast<double>(N);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(N);
    m.val_acc = validation.size() ? evaluate(validation, params, cfg.model).accuracy : 0.0;
    m.lr = lr;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.seconds = cfg.log_wall_clock ? seconds : 0.0;
    result.history.push_back(m);

    result.last = snapshot(config_in, params, adam, epoch, m);
    if (m.val_acc > result.best_val_acc) {
      result.best_val_acc = m.val_acc;
      result.best_epoch = epoch;
      result.best = result.last;
    }
    if (options.run_dir) {
      metrics_out << m.to_json() << '\n' << std::flush;
      timing_out << "epoch=" << epoch << " seconds=" << format_double(seconds) << '\n' << std::flush;
      model::save_checkpoint(*options.run_dir / "last.ckpt", result.last);
      if (result.best_epoch == epoch) model::save_checkpoint(*options.run_dir / "best.ckpt", result.best);
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation sweep

std::uint64_t ablation_seed(std::uint64_t base_seed, double mix_ratio, double alpha) {
  return splitmix64(base_seed ^ splitmix64(std::bit_cast<std::uint64_t>(mix_ratio) ^
                                           splitmix64(std::bit_cast<std::uint64_t>(alpha))));
}

std::vector<AblationCell> run_ablation(const RunConfig& config, const ClipSource& data,
                                       std::span<const double> mix_ratios,
                                       std::span<const double> alphas, std::span<const Mode> modes) {
  if (mix_ratios.empty() || alphas.empty() || modes.empty()) {
    throw InvalidArgument("ablation grid must be non-empty");
  }
  const FeatureSet test = FeatureSet::extract(data, audio::Split::kTest);
  std::vector<AblationCell> cells;
  for (double ratio : mix_ratios) {
    for (double alpha : alphas) {
      for (Mode mode : modes) {
        AblationCell cell{ratio, alpha, mode, std::nullopt, {}};
        try {
          RunConfig cfg = config;
          cfg.mode = mode;
          cfg.train.beta_params.mix_ratio = ratio;
          cfg.train.beta_params.alpha = alpha;
          cfg.train.seed = ablation_seed(config.train.seed, ratio, alpha);
          TrainResult run = train(cfg, data);
          cell.test_accuracy = evaluate(test, run.best.params, cfg.model).accuracy;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells) {
  std::set<double> ratios, alphas;
  std::vector<Mode> modes;
  std::map<std::tuple<double, double, Mode>, const AblationCell*> index;
  for (const auto& c : cells) {
    ratios.insert(c.mix_ratio);
    alphas.insert(c.alpha);
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
    index[{c.mix_ratio, c.alpha, c.mode}] = &c;
  }
  std::sort(modes.begin(), modes.end());
  std::string out = "mix_ratio";
  for (double a : alphas) {
    for (Mode m : modes) out += ",beta(" + format_double(a) + ")_" + std::string(to_string(m));
  }
  out += '\n';
  for (double r : ratios) {
    out += format_double(r);
    for (double a : alphas) {
      for (Mode m : modes) {
        out += ',';
        auto it = index.find({r, a, m});
        if (it == index.end()) {
          out += "NA";
        } else if (!it->second->test_accuracy) {
          out += "FAILED";
        } else {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.4f", *it->second->test_accuracy);
          out += buf;
        }
      }
    }
    out += '\n';
  }
  return out;
}

#define COSMIX_INSTANTIATE(T)                                                                   \
  template ad::Tensor<T> loss_mix<T>(const ad::Tensor<T>&, std::span<const double>,             \
                                     std::span<const double>, std::span<const double>, ClsLoss); \
  template ad::Tensor<T> loss_cos<T>(const ad::Tensor<T>&, const ad::Tensor<T>&);               \
  template LossTerms<T> total_loss<T>(ad::Tape<T>&, ad::ParameterSet<T>&,                       \
                                      const model::ModelConfig&, const MixedBatch&, double,     \
                                      ClsLoss, TargetBranch);                                   \
  template std::pair<std::vector<T>, std::vector<T>> projection_targets<T>(                     \
      ad::ParameterSet<T>&, const model::ModelConfig&, const MixedBatch&);                      \
  template LossTerms<T> total_loss_with_targets<T>(ad::Tape<T>&, ad::ParameterSet<T>&,          \
                                                   const model::ModelConfig&, const MixedBatch&, \
                                                   double, ClsLoss, std::span<const T>,         \
                                                   std::span<const T>);                         \
  template struct AdamState<T>;                                                                 \
  template void adam_step<T>(ad::ParameterSet<T>&, AdamState<T>&, double);

COSMIX_INSTANTIATE(float)
COSMIX_INSTANTIATE(double)

#undef COSMIX_INSTANTIATE

}  // namespace cosmix::train
