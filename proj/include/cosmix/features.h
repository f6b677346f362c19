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

#ifndef COSMIX_FEATURES_H_
#define COSMIX_FEATURES_H_

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cosmix::features {

inline constexpr std::size_t kFrames = 98;
inline constexpr std::size_t kMelBins = 64;

struct FBankSpec {
  int sample_rate = 16000;
  int win_length = 400;  // 25 ms
  int hop_length = 160;  // 10 ms
  int n_fft = 512;
  int n_mels = 64;
  double f_min = 20.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;

  // Throws InvalidArgument.
  void validate() const;
  std::size_t frame_count(std::size_t n_samples) const;
  std::size_t n_bins() const { return static_cast<std::size_t>(n_fft / 2 + 1); }
};

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct FeatureMatrix {
  Matrix values;  // kFrames x kMelBins log energies
  std::string provenance;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
  double operator()(std::size_t r, std::size_t c) const { return values(r, c); }
  double& operator()(std::size_t r, std::size_t c) { return values(r, c); }
};

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data);

std::vector<double> periodic_hann(std::size_t length);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Center frequencies (Hz) of the n_mels triangular filters.
std::vector<double> mel_center_frequencies(const FBankSpec& spec);

// n_mels x (n_fft/2 + 1) triangular filters on the HTK mel scale.
Matrix mel_filterbank(const FBankSpec& spec);

// frames x (n_fft/2 + 1) power spectrogram of a 16000-sample wave.
Matrix stft_power(std::span<const double> wave, const FBankSpec& spec = {});

FeatureMatrix log_fbank(std::span<const double> wave, const FBankSpec& spec = {});

// Precomputes the window and the filterbank once; safe to share across
// threads for concurrent calls to compute().
class FBankExtractor {
 public:
  explicit FBankExtractor(const FBankSpec& spec = {});

  FeatureMatrix compute(std::span<const double> wave) const;
  const FBankSpec& spec() const { return spec_; }

 private:
  struct Band {
    std::size_t first_bin;
    std::vector<double> weights;
  };
  FBankSpec spec_;
  std::vector<double> window_;
  std::vector<Band> bands_;
};

// Binary dump: "FBNK", u32 rows, u32 cols, u32 reserved, then little-endian
// f32 values in row-major order.
void write_feature_dump(const std::filesystem::path& path, const FeatureMatrix& feat);
FeatureMatrix read_feature_dump(const std::filesystem::path& path);

}  // namespace cosmix::features

#endif  // COSMIX_FEATURES_H_
