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

#ifndef COSMIX_MODEL_H_
#define COSMIX_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cosmix/autodiff.h"

namespace cosmix::model {

inline constexpr std::size_t kProjDim = 128;
inline constexpr std::size_t kNumClasses = 10;

// Reference "tinyconv" encoder: one conv -> relu block per entry of
// `channels`, each with a square kernel and the same stride, followed by a
// global average pool. The embedding size is the last channel width.
struct ModelConfig {
  std::vector<std::size_t> channels = {32, 64, 64, 128};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t proj_dim = kProjDim;
  std::size_t n_classes = kNumClasses;
  // 2: dense -> relu -> dense; 1: dense -> relu.
  std::size_t projector_layers = 2;
  std::uint64_t init_seed = 0;
  // Constant subtracted from every input feature before the first conv.
  double input_offset = 0.0;

  std::size_t embed_dim() const { return channels.empty() ? 0 : channels.back(); }
  void validate() const;

  // key = value lines, keys prefixed "model.".
  std::map<std::string, std::string> to_entries() const;
  // Picks the "model." keys out of `entries`; missing keys keep defaults.
  static ModelConfig from_entries(const std::map<std::string, std::string>& entries);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Small config for gradient checks: two narrow conv blocks.
ModelConfig tiny_config(std::uint64_t init_seed = 0);

// Weights ~ U(-b, b) with b = sqrt(6 / fan_in) for layers feeding a relu and
// b = 1 / sqrt(fan_in) otherwise; biases zero.
template <typename T>
ad::ParameterSet<T> init_params(const ModelConfig& config);

std::size_t encoder_parameter_count(const ModelConfig& config);
// Encoder + classifier, i.e. the deployed keyword model.
std::size_t model_parameter_count(const ModelConfig& config);
// Including the training-only projector.
std::size_t total_parameter_count(const ModelConfig& config);

// feats [B, 98, 64] -> embedding [B, D]
template <typename T>
ad::Tensor<T> encoder_forward(ad::Tape<T>& tape, const ad::Tensor<T>& feats,
                              ad::ParameterSet<T>& params, const ModelConfig& config);

// [B, D] -> logits [B, n_classes]
template <typename T>
ad::Tensor<T> classifier_forward(ad::Tape<T>& tape, const ad::Tensor<T>& embedding,
                                 ad::ParameterSet<T>& params, const ModelConfig& config);

// [B, D] -> projection [B, proj_dim]
template <typename T>
ad::Tensor<T> projector_forward(ad::Tape<T>& tape, const ad::Tensor<T>& embedding,
                                ad::ParameterSet<T>& params, const ModelConfig& config);

// Raises ShapeError if `params` does not have exactly the tensors `config`
// implies.
template <typename T>
void check_params(const ad::ParameterSet<T>& params, const ModelConfig& config);

struct Checkpoint {
  // Canonical key = value text of the resolved run configuration; always
  // carries the model.* keys.
  std::string config_text;
  ad::ParameterSet<float> params;
  std::uint32_t epoch = 0;
  std::string rng_state;
  std::string metrics_tail;
  // Optimizer moments, stored as extra records so a resumed run continues
  // the exact trajectory.
  ad::ParameterSet<float> optimizer_state;
  std::uint64_t optimizer_step = 0;

  ModelConfig model_config() const;
};

// "CMX1", u32 version, config text, then per-parameter records
// (name length, name, rank, dims, little-endian f32 values).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::map<std::string, std::string> parse_entries(const std::string& text);
std::string format_entries(const std::map<std::string, std::string>& entries);

}  // namespace cosmix::model

#endif  // COSMIX_MODEL_H_
