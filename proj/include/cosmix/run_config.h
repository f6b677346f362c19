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

#ifndef COSMIX_RUN_CONFIG_H_
#define COSMIX_RUN_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "cosmix/augment.h"
#include "cosmix/model.h"

namespace cosmix::train {

enum class ClsLoss { kSoftmaxCE, kSigmoidBCE };
enum class Mode { kBaseline, kMixup, kCosmix };

std::string_view to_string(ClsLoss loss);
std::string_view to_string(Mode mode);
ClsLoss cls_loss_from_string(std::string_view text);
Mode mode_from_string(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 70;
  double lr0 = 5e-3;
  double decay_rate = 0.85;
  std::size_t decay_every = 4;
  std::size_t decay_start_epoch = 5;
  std::size_t decay_end_epoch = 70;
  double beta_penalty = 0.5;
  augment::BetaParams beta_params;  // Beta(10, 10), mix ratio 0.5
  ClsLoss cls_loss = ClsLoss::kSoftmaxCE;
  std::uint64_t seed = 0;
  // Set model.input_offset to the mean unaugmented train feature value.
  bool center_inputs = true;

  void validate() const;
};

// Everything a run needs, serialisable as `key = value` lines. Missing keys
// take the defaults above; unknown keys and keys without a value are errors.
struct RunConfig {
  TrainConfig train;
  augment::AugmentConfig augment;
  model::ModelConfig model;
  Mode mode = Mode::kCosmix;
  // When false the metrics stream reports seconds = 0 so that identical runs
  // produce byte-identical streams; wall-clock time goes to timing.txt.
  bool log_wall_clock = false;

  void validate() const;
  std::map<std::string, std::string> to_entries() const;
  // Canonical text with every default materialised.
  std::string to_text() const;

  static RunConfig from_entries(const std::map<std::string, std::string>& entries);
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

// Mode overrides: baseline forces mix_ratio = 0 and beta_penalty = 0;
// mixup forces beta_penalty = 0; cosmix leaves the config untouched.
RunConfig effective_config(const RunConfig& config);

}  // namespace cosmix::train

#endif  // COSMIX_RUN_CONFIG_H_
