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

#include "cosmix/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>

#include "cosmix/errors.h"
#include "cosmix/util.h"

namespace cosmix::features {

void FBankSpec::validate() const {
  if (sample_rate <= 0 || win_length <= 0 || hop_length <= 0 || n_fft <= 0 || n_mels <= 0) {
    throw InvalidArgument("fbank: sizes must be positive");
  }
  if (win_length > n_fft) throw InvalidArgument("fbank: win_length exceeds n_fft");
  if (hop_length > win_length) throw InvalidArgument("fbank: hop_length exceeds win_length");
  if (!std::has_single_bit(static_cast<unsigned>(n_fft))) {
    throw InvalidArgument("fbank: n_fft must be a power of two");
  }
  if (!(f_min < f_max)) throw InvalidArgument("fbank: degenerate band, f_min >= f_max");
  if (f_min < 0 || f_max > sample_rate / 2.0) {
    throw InvalidArgument("fbank: band must lie within [0, sample_rate/2]");
  }
  if (!(log_floor > 0)) throw InvalidArgument("fbank: log_floor must be positive");
}

std::size_t FBankSpec::frame_count(std::size_t n_samples) const {
  const auto win = static_cast<std::size_t>(win_length);
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / static_cast<std::size_t>(hop_length);
}

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (n == 0 || !std::has_single_bit(n)) throw InvalidArgument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  // exp(-2 pi i k / n) for k < n/2, each evaluated directly.
  thread_local std::vector<std::complex<double>> twiddles;
  if (twiddles.size() != n / 2) {
    twiddles.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles[k] = {std::cos(angle), std::sin(angle)};
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> u = data[start + k];
        const std::complex<double> x = data[start + k + half];
        const std::complex<double> w = twiddles[k * step];
        const std::complex<double> v(x.real() * w.real() - x.imag() * w.imag(),
                                     x.real() * w.imag() + x.imag() * w.real());
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

std::vector<double> periodic_hann(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

// n_mels + 2 band edges, uniformly spaced in mel.
std::vector<double> mel_edges_hz(const FBankSpec& spec) {
  const double lo = hz_to_mel(spec.f_min);
  const double hi = hz_to_mel(spec.f_max);
  std::vector<double> edges(static_cast<std::size_t>(spec.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(edges.size() - 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FBankSpec& spec) {
  spec.validate();
  auto edges = mel_edges_hz(spec);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(const FBankSpec& spec) {
  spec.validate();
  const auto edges = mel_edges_hz(spec);
  const std::size_t bins = spec.n_bins();
  Matrix filters(static_cast<std::size_t>(spec.n_mels), bins);
  for (std::size_t m = 0; m < filters.rows; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * spec.sample_rate / spec.n_fft;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      filters(m, k) = w;
    }
  }
  return filters;
}

namespace {

void check_wave(std::span<const double> wave) {
  if (wave.size() != 16000) {
    throw InvalidInput("expected a 16000-sample waveform, got " + std::to_string(wave.size()));
  }
}

void power_frames(std::span<const double> wave, const FBankSpec& spec,
                  std::span<const double> window, Matrix& out) {
  const std::size_t frames = spec.frame_count(wave.size());
  const std::size_t bins = spec.n_bins();
  const auto win = static_cast<std::size_t>(spec.win_length);
  const auto hop = static_cast<std::size_t>(spec.hop_length);
  out = Matrix(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(spec.n_fft));
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t n = 0; n < win; ++n) buf[n] = wave[t * hop + n] * window[n];
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) out(t, k) = std::norm(buf[k]);
  }
}

}  // namespace

Matrix stft_power(std::span<const double> wave, const FBankSpec& spec) {
  spec.validate();
  check_wave(wave);
  Matrix out;
  power_frames(wave, spec, periodic_hann(static_cast<std::size_t>(spec.win_length)), out);
  return out;
}

FeatureMatrix log_fbank(std::span<const double> wave, const FBankSpec& spec) {
  return FBankExtractor(spec).compute(wave);
}

FBankExtractor::FBankExtractor(const FBankSpec& spec)
    : spec_(spec), window_(periodic_hann(static_cast<std::size_t>(spec.win_length))) {
  Matrix filters = mel_filterbank(spec_);
  for (std::size_t m = 0; m < filters.rows; ++m) {
    std::size_t first = filters.cols, last = 0;
    for (std::size_t k = 0; k < filters.cols; ++k) {
      if (filters(m, k) > 0) {
        first = std::min(first, k);
        last = k;
      }
    }
    Band band{first, {}};
    for (std::size_t k = first; k <= last && first < filters.cols; ++k) {
      band.weights.push_back(filters(m, k));
    }
    bands_.push_back(std::move(band));
  }
}

FeatureMatrix FBankExtractor::compute(std::span<const double> wave) const {
  check_wave(wave);
  Matrix power;
  power_frames(wave, spec_, window_, power);
  FeatureMatrix feat;
  feat.values = Matrix(power.rows, bands_.size());
  for (std::size_t t = 0; t < power.rows; ++t) {
    const double* row = &power.values[t * power.cols];
    for (std::size_t m = 0; m < bands_.size(); ++m) {
      const Band& band = bands_[m];
      double e = 0.0;
      for (std::size_t i = 0; i < band.weights.size(); ++i) e += band.weights[i] * row[band.first_bin + i];
      feat.values(t, m) = std::log(std::max(e, spec_.log_floor));
    }
  }
  return feat;
}

void write_feature_dump(const std::filesystem::path& path, const FeatureMatrix& feat) {
  std::string out = "FBNK";
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(static_cast<std::uint32_t>(feat.rows()));
  put_u32(static_cast<std::uint32_t>(feat.cols()));
  put_u32(0);
  for (double v : feat.values.values) {
    put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file_atomic(path, out);
}

FeatureMatrix read_feature_dump(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto u32 = [&bytes](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    }
    return v;
  };
  if (bytes.size() < 16 || bytes.compare(0, 4, "FBNK") != 0) {
    throw FormatError("not a feature dump: " + path.string());
  }
  const std::size_t rows = u32(4), cols = u32(8);
  if (bytes.size() != 16 + 4 * rows * cols) throw FormatError("feature dump length mismatch");
  FeatureMatrix feat;
  feat.values = Matrix(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    feat.values.values[i] = std::bit_cast<float>(u32(16 + 4 * i));
  }
  feat.provenance = path.string();
  return feat;
}

}  // namespace cosmix::features
