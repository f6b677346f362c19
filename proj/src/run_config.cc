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

#include "cosmix/run_config.h"

#include <cmath>
#include <set>

#include "cosmix/errors.h"
#include "cosmix/util.h"

namespace cosmix::train {

std::string_view to_string(ClsLoss loss) {
  return loss == ClsLoss::kSoftmaxCE ? "softmax_ce" : "sigmoid_bce";
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kBaseline:
      return "baseline";
    case Mode::kMixup:
      return "mixup";
    case Mode::kCosmix:
      return "cosmix";
  }
  return "cosmix";
}

ClsLoss cls_loss_from_string(std::string_view text) {
  if (text == "softmax_ce") return ClsLoss::kSoftmaxCE;
  if (text == "sigmoid_bce") return ClsLoss::kSigmoidBCE;
  throw ConfigError("unknown classification loss: " + std::string(text));
}

Mode mode_from_string(std::string_view text) {
  if (text == "baseline") return Mode::kBaseline;
  if (text == "mixup") return Mode::kMixup;
  if (text == "cosmix") return Mode::kCosmix;
  throw ConfigError("unknown mode: " + std::string(text));
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("train.lr0 must be > 0");
  if (!(decay_rate > 0 && decay_rate <= 1)) throw ConfigError("train.decay_rate must lie in (0, 1]");
  if (decay_every == 0) throw ConfigError("train.decay_every must be >= 1");
  if (!(beta_penalty >= 0)) throw ConfigError("train.beta_penalty must be >= 0");
  try {
    beta_params.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::validate() const {
  train.validate();
  model.validate();
  try {
    augment.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::map<std::string, std::string> RunConfig::to_entries() const {
  auto d = [](double v) { return format_double(v); };
  auto z = [](std::size_t v) { return std::to_string(v); };
  auto i = [](int v) { return std::to_string(v); };
  std::map<std::string, std::string> e = {
      {"train.batch_size", z(train.batch_size)},
      {"train.epochs", z(train.epochs)},
      {"train.lr0", d(train.lr0)},
      {"train.decay_rate", d(train.decay_rate)},
      {"train.decay_every", z(train.decay_every)},
      {"train.decay_start_epoch", z(train.decay_start_epoch)},
      {"train.decay_end_epoch", z(train.decay_end_epoch)},
      {"train.beta_penalty", d(train.beta_penalty)},
      {"train.alpha", d(train.beta_params.alpha)},
      {"train.mix_ratio", d(train.beta_params.mix_ratio)},
      {"train.cls_loss", std::string(to_string(train.cls_loss))},
      {"train.seed", std::to_string(train.seed)},
      {"train.center_inputs", train.center_inputs ? "true" : "false"},
      {"augment.shift_ms_min", d(augment.shift_ms_min)},
      {"augment.shift_ms_max", d(augment.shift_ms_max)},
      {"augment.stretch_min", d(augment.stretch_min)},
      {"augment.stretch_max", d(augment.stretch_max)},
      {"augment.time_mask_max", i(augment.time_mask_max)},
      {"augment.freq_mask_max", i(augment.freq_mask_max)},
      {"augment.n_time_masks", i(augment.n_time_masks)},
      {"augment.n_freq_masks", i(augment.n_freq_masks)},
      {"augment.mask_value", d(augment.mask_value)},
      {"run.mode", std::string(to_string(mode))},
      {"run.log_wall_clock", log_wall_clock ? "true" : "false"},
  };
  for (auto& [k, v] : model.to_entries()) e[k] = v;
  return e;
}

std::string RunConfig::to_text() const { return model::format_entries(to_entries()); }

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if (value.empty() || value.front() == '-') throw std::invalid_argument(value);
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid value for " + key + ": '" + value + "'");
}

}  // namespace

RunConfig RunConfig::from_entries(const std::map<std::string, std::string>& entries) {
  static const std::set<std::string> known = [] {
    std::set<std::string> keys;
    for (const auto& [k, v] : RunConfig{}.to_entries()) keys.insert(k);
    return keys;
  }();
  for (const auto& [k, v] : entries) {
    if (!known.count(k)) throw ConfigError("unknown config key: " + k);
    if (v.empty()) throw ConfigError("missing value for config key: " + k);
  }

  RunConfig cfg;
  auto get = [&entries](const char* key) -> const std::string* {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  auto size_field = [&](const char* key, std::size_t& field) {
    if (auto* v = get(key)) field = static_cast<std::size_t>(parse_u64(key, *v));
  };
  auto double_field = [&](const char* key, double& field) {
    if (auto* v = get(key)) field = parse_double(key, *v);
  };
  auto int_field = [&](const char* key, int& field) {
    if (auto* v = get(key)) field = parse_int(key, *v);
  };

  size_field("train.batch_size", cfg.train.batch_size);
  size_field("train.epochs", cfg.train.epochs);
  double_field("train.lr0", cfg.train.lr0);
  double_field("train.decay_rate", cfg.train.decay_rate);
  size_field("train.decay_every", cfg.train.decay_every);
  size_field("train.decay_start_epoch", cfg.train.decay_start_epoch);
  size_field("train.decay_end_epoch", cfg.train.decay_end_epoch);
  double_field("train.beta_penalty", cfg.train.beta_penalty);
  double_field("train.alpha", cfg.train.beta_params.alpha);
  double_field("train.mix_ratio", cfg.train.beta_params.mix_ratio);
  if (auto* v = get("train.cls_loss")) cfg.train.cls_loss = cls_loss_from_string(*v);
  if (auto* v = get("train.seed")) cfg.train.seed = parse_u64("train.seed", *v);
  if (auto* v = get("train.center_inputs")) cfg.train.center_inputs = parse_bool("train.center_inputs", *v);
  double_field("augment.shift_ms_min", cfg.augment.shift_ms_min);
  double_field("augment.shift_ms_max", cfg.augment.shift_ms_max);
  double_field("augment.stretch_min", cfg.augment.stretch_min);
  double_field("augment.stretch_max", cfg.augment.stretch_max);
  int_field("augment.time_mask_max", cfg.augment.time_mask_max);
  int_field("augment.freq_mask_max", cfg.augment.freq_mask_max);
  int_field("augment.n_time_masks", cfg.augment.n_time_masks);
  int_field("augment.n_freq_masks", cfg.augment.n_freq_masks);
  double_field("augment.mask_value", cfg.augment.mask_value);
  if (auto* v = get("run.mode")) cfg.mode = mode_from_string(*v);
  if (auto* v = get("run.log_wall_clock")) cfg.log_wall_clock = parse_bool("run.log_wall_clock", *v);
  cfg.model = model::ModelConfig::from_entries(entries);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_text(const std::string& text) {
  return from_entries(model::parse_entries(text));
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return from_text(text);
}

RunConfig effective_config(const RunConfig& config) {
  RunConfig out = config;
  if (config.mode == Mode::kBaseline) {
    out.train.beta_params.mix_ratio = 0.0;
    out.train.beta_penalty = 0.0;
  } else if (config.mode == Mode::kMixup) {
    out.train.beta_penalty = 0.0;
  }
  return out;
}

}  // namespace cosmix::train
