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

#include "cosmix/augment.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cosmix/audio_dataset.h"
#include "cosmix/errors.h"

namespace cosmix::augment {

void AugmentConfig::validate() const {
  if (shift_ms_min > shift_ms_max) throw InvalidArgument("augment: shift range is inverted");
  if (!(stretch_min > 0) || stretch_min > stretch_max) {
    throw InvalidArgument("augment: stretch range must be positive and ordered");
  }
  if (time_mask_max < 0 || freq_mask_max < 0) throw InvalidArgument("augment: mask maxima must be >= 0");
  if (n_time_masks < 0 || n_freq_masks < 0) throw InvalidArgument("augment: mask counts must be >= 0");
}

void BetaParams::validate() const {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidArgument("beta: alpha must be > 0");
  if (!(mix_ratio >= 0 && mix_ratio <= 1)) throw InvalidArgument("beta: mix_ratio must lie in [0, 1]");
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0)) throw InvalidArgument("gamma: shape must be > 0");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (shape < 1.0) {
    double u = uniform(rng);
    while (u <= 0.0) u = uniform(rng);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(const BetaParams& params, Rng& rng) {
  if (!(params.alpha > 0)) throw InvalidArgument("beta: alpha must be > 0");
  while (true) {
    const double a = sample_gamma(params.alpha, rng);
    const double b = sample_gamma(params.alpha, rng);
    const double sum = a + b;
    if (!(sum > 0)) continue;
    const double lambda = a / sum;
    // Small alpha can underflow to an endpoint; the open interval is part
    // of the contract.
    if (lambda > 0.0 && lambda < 1.0) return lambda;
  }
}

std::vector<double> mixup_waveforms(std::span<const double> x_i, std::span<const double> x_j,
                                    double lambda) {
  if (x_i.size() != x_j.size()) {
    throw InvalidInput("mixup: length mismatch " + std::to_string(x_i.size()) + " vs " +
                       std::to_string(x_j.size()));
  }
  if (!(lambda >= 0 && lambda <= 1)) throw InvalidInput("mixup: lambda must lie in [0, 1]");
  std::vector<double> out(x_i.size());
  const double mu = 1.0 - lambda;
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = lambda * x_i[t] + mu * x_j[t];
  return out;
}

namespace {

void check_one_hot(std::span<const double> y) {
  int ones = 0;
  for (double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw InvalidInput("mix_labels: label is not one-hot");
    }
  }
  if (ones != 1) throw InvalidInput("mix_labels: label is not one-hot");
}

}  // namespace

std::vector<double> mix_labels(std::span<const double> y_i, std::span<const double> y_j,
                               double lambda) {
  if (y_i.size() != y_j.size()) throw InvalidInput("mix_labels: size mismatch");
  if (!(lambda >= 0 && lambda <= 1)) throw InvalidInput("mix_labels: lambda must lie in [0, 1]");
  check_one_hot(y_i);
  check_one_hot(y_j);
  std::vector<double> out(y_i.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
  return out;
}

std::vector<double> shift_waveform(std::span<const double> wave, int shift_samples) {
  const auto n = static_cast<std::ptrdiff_t>(wave.size());
  std::vector<double> out(wave.size(), 0.0);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t src = t - shift_samples;
    if (src >= 0 && src < n) out[static_cast<std::size_t>(t)] = wave[static_cast<std::size_t>(src)];
  }
  return out;
}

std::vector<double> time_shift(std::span<const double> wave, const AugmentConfig& cfg, Rng& rng) {
  const int lo = static_cast<int>(std::lround(cfg.shift_ms_min * audio::kSampleRate / 1000.0));
  const int hi = static_cast<int>(std::lround(cfg.shift_ms_max * audio::kSampleRate / 1000.0));
  std::uniform_int_distribution<int> dist(lo, hi);
  return shift_waveform(wave, dist(rng));
}

std::vector<double> resample_speed(std::span<const double> wave, double factor) {
  if (!(factor > 0)) throw InvalidArgument("stretch: factor must be > 0");
  const std::size_t n = wave.size();
  const auto len = static_cast<std::size_t>(std::lround(static_cast<double>(n) / factor));
  std::vector<double> out(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    const double pos = static_cast<double>(k) * factor;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= n) break;
    const double frac = pos - static_cast<double>(i0);
    const double next = i0 + 1 < n ? wave[i0 + 1] : 0.0;
    out[k] = frac == 0.0 ? wave[i0] : wave[i0] * (1.0 - frac) + next * frac;
  }
  return out;
}

std::vector<double> stretch_waveform(std::span<const double> wave, double factor) {
  auto resampled = resample_speed(wave, factor);
  if (resampled.empty()) return std::vector<double>(wave.size(), 0.0);
  return audio::pad_or_trim(resampled, wave.size());
}

std::vector<double> time_stretch(std::span<const double> wave, const AugmentConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> dist(cfg.stretch_min, cfg.stretch_max);
  return stretch_waveform(wave, dist(rng));
}

void apply_time_mask(features::FeatureMatrix& feat, std::size_t start, std::size_t width,
                     double value) {
  if (start + width > feat.rows()) throw InvalidArgument("time mask exceeds frame count");
  for (std::size_t t = start; t < start + width; ++t) {
    for (std::size_t c = 0; c < feat.cols(); ++c) feat(t, c) = value;
  }
}

void apply_freq_mask(features::FeatureMatrix& feat, std::size_t start, std::size_t width,
                     double value) {
  if (start + width > feat.cols()) throw InvalidArgument("frequency mask exceeds bin count");
  for (std::size_t t = 0; t < feat.rows(); ++t) {
    for (std::size_t c = start; c < start + width; ++c) feat(t, c) = value;
  }
}

features::FeatureMatrix spec_augment(features::FeatureMatrix feat, const AugmentConfig& cfg,
                                     Rng& rng) {
  if (static_cast<std::size_t>(cfg.time_mask_max) > feat.rows()) {
    throw InvalidArgument("time_mask_max exceeds the frame count");
  }
  if (static_cast<std::size_t>(cfg.freq_mask_max) > feat.cols()) {
    throw InvalidArgument("freq_mask_max exceeds the bin count");
  }
  auto draw = [&rng](std::size_t max_width, std::size_t axis) {
    std::uniform_int_distribution<std::size_t> width_dist(0, max_width);
    const std::size_t w = width_dist(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, axis - w);
    return std::pair{start_dist(rng), w};
  };
  for (int m = 0; m < cfg.n_time_masks; ++m) {
    auto [t0, w] = draw(static_cast<std::size_t>(cfg.time_mask_max), feat.rows());
    apply_time_mask(feat, t0, w, cfg.mask_value);
  }
  for (int m = 0; m < cfg.n_freq_masks; ++m) {
    auto [f0, w] = draw(static_cast<std::size_t>(cfg.freq_mask_max), feat.cols());
    apply_freq_mask(feat, f0, w, cfg.mask_value);
  }
  return feat;
}

}  // namespace cosmix::augment
