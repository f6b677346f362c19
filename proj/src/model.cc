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

#include "cosmix/model.h"

#include <cmath>
#include <stdexcept>
#include <random>

#include "cosmix/errors.h"
#include "cosmix/features.h"
#include "cosmix/util.h"

namespace cosmix::model {

void ModelConfig::validate() const {
  if (channels.empty()) throw ConfigError("model.channels must list at least one block");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("model.channels entries must be positive");
  }
  if (kernel == 0 || stride == 0) throw ConfigError("model.kernel and model.stride must be positive");
  if (proj_dim != kProjDim) throw ConfigError("model.proj_dim must be 128");
  if (n_classes != kNumClasses) throw ConfigError("model.n_classes must be 10");
  if (projector_layers != 1 && projector_layers != 2) {
    throw ConfigError("model.projector_layers must be 1 or 2");
  }
  if (!std::isfinite(input_offset)) throw ConfigError("model.input_offset must be finite");
}

std::map<std::string, std::string> ModelConfig::to_entries() const {
  std::string ch;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (i) ch += ',';
    ch += std::to_string(channels[i]);
  }
  return {
      {"model.channels", ch},
      {"model.kernel", std::to_string(kernel)},
      {"model.stride", std::to_string(stride)},
      {"model.embed_dim", std::to_string(embed_dim())},
      {"model.proj_dim", std::to_string(proj_dim)},
      {"model.n_classes", std::to_string(n_classes)},
      {"model.projector_layers", std::to_string(projector_layers)},
      {"model.init_seed", std::to_string(init_seed)},
      {"model.input_offset", format_double(input_offset)},
  };
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size() || value.front() == '-') throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

}  // namespace

ModelConfig ModelConfig::from_entries(const std::map<std::string, std::string>& entries) {
  ModelConfig cfg;
  if (auto it = entries.find("model.channels"); it != entries.end()) {
    cfg.channels.clear();
    for (const auto& part : split(it->second, ',')) {
      cfg.channels.push_back(parse_size(it->first, std::string(trim(part))));
    }
  }
  auto take = [&entries](const char* key, auto& field) {
    if (auto it = entries.find(key); it != entries.end()) {
      field = static_cast<std::remove_reference_t<decltype(field)>>(parse_size(key, it->second));
    }
  };
  take("model.kernel", cfg.kernel);
  take("model.stride", cfg.stride);
  take("model.proj_dim", cfg.proj_dim);
  take("model.n_classes", cfg.n_classes);
  take("model.projector_layers", cfg.projector_layers);
  take("model.init_seed", cfg.init_seed);
  if (auto it = entries.find("model.input_offset"); it != entries.end()) {
    try {
      std::size_t pos = 0;
      cfg.input_offset = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
    } catch (const std::exception&) {
      throw ConfigError("invalid value for model.input_offset: '" + it->second + "'");
    }
  }
  if (auto it = entries.find("model.embed_dim"); it != entries.end()) {
    if (parse_size(it->first, it->second) != cfg.embed_dim()) {
      throw ConfigError("model.embed_dim must equal the last entry of model.channels");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig tiny_config(std::uint64_t init_seed) {
  ModelConfig cfg;
  cfg.channels = {2, 3};
  cfg.kernel = 3;
  cfg.stride = 2;
  cfg.init_seed = init_seed;
  return cfg;
}

namespace {

struct LayerSpec {
  std::string name;
  ad::Shape shape;
  std::size_t fan_in;
  bool is_bias;
  bool relu_follows;
};

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
  std::vector<LayerSpec> specs;
  std::size_t in = 1;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::size_t out = cfg.channels[i];
    const std::string base = "encoder.conv" + std::to_string(i);
    const std::size_t fan_in = in * cfg.kernel * cfg.kernel;
    specs.push_back({base + ".weight", {out, in, cfg.kernel, cfg.kernel}, fan_in, false, true});
    specs.push_back({base + ".bias", {out}, fan_in, true, true});
    in = out;
  }
  const std::size_t D = cfg.embed_dim();
  specs.push_back({"classifier.weight", {D, cfg.n_classes}, D, false, false});
  specs.push_back({"classifier.bias", {cfg.n_classes}, D, true, false});
  specs.push_back({"projector.fc0.weight", {D, cfg.proj_dim}, D, false, true});
  specs.push_back({"projector.fc0.bias", {cfg.proj_dim}, D, true, true});
  if (cfg.projector_layers == 2) {
    specs.push_back({"projector.fc1.weight", {cfg.proj_dim, cfg.proj_dim}, cfg.proj_dim, false, false});
    specs.push_back({"projector.fc1.bias", {cfg.proj_dim}, cfg.proj_dim, true, false});
  }
  return specs;
}

std::size_t count_prefix(const ModelConfig& cfg, std::string_view prefix) {
  std::size_t n = 0;
  for (const auto& s : layer_specs(cfg)) {
    if (s.name.starts_with(prefix)) n += ad::numel(s.shape);
  }
  return n;
}

}  // namespace

std::size_t encoder_parameter_count(const ModelConfig& config) {
  return count_prefix(config, "encoder.");
}

std::size_t model_parameter_count(const ModelConfig& config) {
  return encoder_parameter_count(config) + count_prefix(config, "classifier.");
}

std::size_t total_parameter_count(const ModelConfig& config) {
  return model_parameter_count(config) + count_prefix(config, "projector.");
}

template <typename T>
ad::ParameterSet<T> init_params(const ModelConfig& config) {
  config.validate();
  ad::ParameterSet<T> params;
  std::uint64_t index = 0;
  for (const auto& spec : layer_specs(config)) {
    auto& p = params.add(spec.name, spec.shape);
    if (!spec.is_bias) {
      Rng rng = counter_rng(config.init_seed, {index});
      const double gain = spec.relu_follows ? std::sqrt(6.0) : 1.0;
      const double bound = gain / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : p.value) v = static_cast<T>(dist(rng));
    }
    ++index;
  }
  return params;
}

template <typename T>
void check_params(const ad::ParameterSet<T>& params, const ModelConfig& config) {
  const auto specs = layer_specs(config);
  if (params.size() != specs.size()) {
    throw ShapeError("parameter set has " + std::to_string(params.size()) + " tensors, config implies " +
                     std::to_string(specs.size()));
  }
  for (const auto& spec : specs) {
    if (!params.contains(spec.name)) throw ShapeError("missing parameter " + spec.name);
    const auto& p = params.at(spec.name);
    if (p.shape != spec.shape) {
      throw ShapeError("parameter " + spec.name + " has shape " + ad::to_string(p.shape) +
                       ", config implies " + ad::to_string(spec.shape));
    }
  }
}

template <typename T>
ad::Tensor<T> encoder_forward(ad::Tape<T>& tape, const ad::Tensor<T>& feats,
                              ad::ParameterSet<T>& params, const ModelConfig& config) {
  const auto& s = feats.shape();
  if (s.size() != 3 || s[1] != features::kFrames || s[2] != features::kMelBins) {
    throw ShapeError("encoder expects features [B, 98, 64], got " + ad::to_string(s));
  }
  ad::Tensor<T> h = ad::reshape(feats, {s[0], 1, s[1], s[2]});
  if (config.input_offset != 0.0) {
    h = ad::add(h, tape.constant(h.shape(), std::vector<T>(h.size(), static_cast<T>(-config.input_offset))));
  }
  const ad::Conv2dOptions opts{config.stride, config.kernel / 2};
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const std::string base = "encoder.conv" + std::to_string(i);
    h = ad::conv2d(h, tape.bind(params.at(base + ".weight")), tape.bind(params.at(base + ".bias")), opts);
    h = ad::relu(h);
  }
  return ad::global_avg_pool(h);
}

template <typename T>
ad::Tensor<T> classifier_forward(ad::Tape<T>& tape, const ad::Tensor<T>& embedding,
                                 ad::ParameterSet<T>& params, const ModelConfig&) {
  return ad::dense(embedding, tape.bind(params.at("classifier.weight")),
                   tape.bind(params.at("classifier.bias")));
}

template <typename T>
ad::Tensor<T> projector_forward(ad::Tape<T>& tape, const ad::Tensor<T>& embedding,
                                ad::ParameterSet<T>& params, const ModelConfig& config) {
  ad::Tensor<T> h = ad::relu(ad::dense(embedding, tape.bind(params.at("projector.fc0.weight")),
                                       tape.bind(params.at("projector.fc0.bias"))));
  if (config.projector_layers == 2) {
    h = ad::dense(h, tape.bind(params.at("projector.fc1.weight")),
                  tape.bind(params.at("projector.fc1.bias")));
  }
  return h;
}

#define COSMIX_INSTANTIATE(T)                                                                   \
  template ad::ParameterSet<T> init_params<T>(const ModelConfig&);                              \
  template void check_params<T>(const ad::ParameterSet<T>&, const ModelConfig&);                \
  template ad::Tensor<T> encoder_forward<T>(ad::Tape<T>&, const ad::Tensor<T>&,                 \
                                            ad::ParameterSet<T>&, const ModelConfig&);          \
  template ad::Tensor<T> classifier_forward<T>(ad::Tape<T>&, const ad::Tensor<T>&,              \
                                               ad::ParameterSet<T>&, const ModelConfig&);       \
  template ad::Tensor<T> projector_forward<T>(ad::Tape<T>&, const ad::Tensor<T>&,               \
                                              ad::ParameterSet<T>&, const ModelConfig&);

COSMIX_INSTANTIATE(float)
COSMIX_INSTANTIATE(double)

#undef COSMIX_INSTANTIATE

}  // namespace cosmix::model
