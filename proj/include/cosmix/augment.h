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

#ifndef COSMIX_AUGMENT_H_
#define COSMIX_AUGMENT_H_

#include <span>
#include <vector>

#include "cosmix/features.h"
#include "cosmix/util.h"

namespace cosmix::augment {

struct AugmentConfig {
  double shift_ms_min = -100.0;
  double shift_ms_max = 100.0;
  double stretch_min = 0.9;
  double stretch_max = 1.1;
  int time_mask_max = 13;  // frames
  int freq_mask_max = 7;   // mel bins
  int n_time_masks = 1;
  int n_freq_masks = 1;
  double mask_value = 0.0;

  void validate() const;
};

// Symmetric Beta(alpha, alpha) interpolation and the probability that a
// batch row is mixed at all.
struct BetaParams {
  double alpha = 10.0;
  double mix_ratio = 0.5;

  void validate() const;
};

// Marsaglia-Tsang; shapes below one are boosted by one and corrected with
// U^(1/shape).
double sample_gamma(double shape, Rng& rng);
// Draws in (0, 1) from Beta(alpha, alpha) as G1 / (G1 + G2).
double sample_beta(const BetaParams& params, Rng& rng);

std::vector<double> mixup_waveforms(std::span<const double> x_i, std::span<const double> x_j,
                                    double lambda);
std::vector<double> mix_labels(std::span<const double> y_i, std::span<const double> y_j,
                               double lambda);

// Positive shift moves content later; vacated samples are zero.
std::vector<double> shift_waveform(std::span<const double> wave, int shift_samples);
std::vector<double> time_shift(std::span<const double> wave, const AugmentConfig& cfg, Rng& rng);

// Playback-speed change by `factor`: linear-interpolation resample to
// round(N / factor) samples, then pad or trim back to N.
std::vector<double> resample_speed(std::span<const double> wave, double factor);
std::vector<double> stretch_waveform(std::span<const double> wave, double factor);
std::vector<double> time_stretch(std::span<const double> wave, const AugmentConfig& cfg, Rng& rng);

void apply_time_mask(features::FeatureMatrix& feat, std::size_t start, std::size_t width,
                     double value);
void apply_freq_mask(features::FeatureMatrix& feat, std::size_t start, std::size_t width,
                     double value);
features::FeatureMatrix spec_augment(features::FeatureMatrix feat, const AugmentConfig& cfg,
                                     Rng& rng);

}  // namespace cosmix::augment

#endif  // COSMIX_AUGMENT_H_
