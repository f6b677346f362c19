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

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cosmix/errors.h"
#include "test_support.h"

namespace cosmix::features {
namespace {

using cosmix::testing::random_wave;
using cosmix::testing::TempDir;

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / n;
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Reference power spectrogram built from the naive DFT and the textbook
// periodic Hann formula.
Matrix reference_power(const std::vector<double>& wave) {
  Matrix out(98, 257);
  for (std::size_t f = 0; f < 98; ++f) {
    std::vector<std::complex<double>> frame(512, 0.0);
    for (std::size_t i = 0; i < 400; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 400.0);
      frame[i] = wave[f * 160 + i] * w;
    }
    auto spec = naive_dft(frame);
    for (std::size_t k = 0; k < 257; ++k) out(f, k) = std::norm(spec[k]);
  }
  return out;
}

TEST(FBankSpec, DefaultsAndFrameCount) {
  FBankSpec spec;
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(spec.frame_count(16000), 98u);
  EXPECT_EQ(spec.n_bins(), 257u);
  FBankSpec bad = spec;
  bad.f_min = 9000;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = spec;
  bad.win_length = 600;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = spec;
  bad.hop_length = 500;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Fft, MatchesNaiveDft) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t size : {1u, 2u, 8u, 64u, 512u}) {
    std::vector<std::complex<double>> x(size);
    for (auto& v : x) v = {n(rng), n(rng)};
    auto expected = naive_dft(x);
    fft(x);
    double err = 0, norm = 0;
    for (std::size_t k = 0; k < size; ++k) {
      err += std::norm(x[k] - expected[k]);
      norm += std::norm(expected[k]);
    }
    EXPECT_LE(std::sqrt(err / norm), 1e-12) << size;
  }
  std::vector<std::complex<double>> odd(12);
  EXPECT_THROW(fft(odd), InvalidArgument);
}

TEST(PeriodicHann, Formula) {
  auto w = periodic_hann(400);
  ASSERT_EQ(w.size(), 400u);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[200], 1.0, 1e-15);
  for (std::size_t i = 0; i < 400; ++i)
    EXPECT_NEAR(w[i], 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 400.0), 1e-15);
}

TEST(StftPower, MatchesNaiveReference) {
  auto wave = random_wave(5);
  Matrix fast = stft_power(wave);
  Matrix ref = reference_power(wave);
  ASSERT_EQ(fast.rows, 98u);
  ASSERT_EQ(fast.cols, 257u);
  for (std::size_t f = 0; f < 98; f += 13) {
    double err = 0, norm = 0;
    for (std::size_t k = 0; k < 257; ++k) {
      err += std::pow(fast(f, k) - ref(f, k), 2);
      norm += ref(f, k) * ref(f, k);
      EXPECT_GE(fast(f, k), 0.0);
    }
    EXPECT_LE(std::sqrt(err / norm), 1e-9);
  }
}

TEST(StftPower, ZeroWaveAndLength) {
  std::vector<double> zero(16000, 0.0);
  Matrix p = stft_power(zero);
  for (double v : p.values) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(stft_power(std::vector<double>(15999, 0.0)), InvalidInput);
}

TEST(StftPower, SinusoidPeaksAtBin32) {
  std::vector<double> wave(16000);
  for (std::size_t t = 0; t < wave.size(); ++t)
    wave[t] = std::sin(2.0 * std::numbers::pi * 1000.0 * t / 16000.0);
  Matrix p = stft_power(wave);
  for (std::size_t f = 0; f < 98; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 257; ++k)
      if (p(f, k) > p(f, best)) best = k;
    EXPECT_EQ(best, 32u) << "frame " << f;
  }
}

TEST(MelFilterbank, Shape) {
  FBankSpec spec;
  Matrix fb = mel_filterbank(spec);
  ASSERT_EQ(fb.rows, 64u);
  ASSERT_EQ(fb.cols, 257u);
  for (std::size_t m = 0; m < 64; ++m) {
    double s = 0;
    for (std::size_t k = 0; k < 257; ++k) {
      EXPECT_GE(fb(m, k), 0.0);
      s += fb(m, k);
    }
    EXPECT_GT(s, 0.0) << m;
  }
  FBankSpec bad = spec;
  bad.f_min = 8000;
  EXPECT_THROW(mel_filterbank(bad), InvalidArgument);
}

TEST(MelFilterbank, CentersFollowHtkScale) {
  FBankSpec spec;
  auto centers = mel_center_frequencies(spec);
  ASSERT_EQ(centers.size(), 64u);
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double lo = mel(20.0), hi = mel(8000.0);
  for (std::size_t m = 0; m < 64; ++m) {
    EXPECT_NEAR(centers[m], inv(lo + (hi - lo) * (m + 1) / 65.0), 1e-6);
    if (m) EXPECT_GT(centers[m], centers[m - 1]);
  }
  EXPECT_LT(centers[0], centers[63]);
  EXPECT_LT(centers[63], 8000.0);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
}

TEST(LogFbank, ShapeAndFloor) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto f = log_fbank(random_wave(seed));
    EXPECT_EQ(f.rows(), kFrames);
    EXPECT_EQ(f.cols(), kMelBins);
    for (double v : f.values.values) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, std::log(1e-10));
    }
  }
  auto zero = log_fbank(std::vector<double>(16000, 0.0));
  for (double v : zero.values.values) EXPECT_EQ(v, std::log(1e-10));
}

TEST(LogFbank, MatchesReferencePipeline) {
  auto wave = random_wave(9);
  FBankSpec spec;
  Matrix power = reference_power(wave);
  Matrix fb = mel_filterbank(spec);
  auto feat = log_fbank(wave);
  for (std::size_t f = 0; f < 98; f += 7) {
    for (std::size_t m = 0; m < 64; ++m) {
      double e = 0;
      for (std::size_t k = 0; k < 257; ++k) e += power(f, k) * fb(m, k);
      EXPECT_NEAR(feat(f, m), std::log(std::max(e, 1e-10)), 1e-9);
    }
  }
}

TEST(LogFbank, ExtractorAgreesWithFreeFunction) {
  FBankExtractor ex;
  auto wave = random_wave(12);
  auto a = ex.compute(wave);
  auto b = log_fbank(wave);
  for (std::size_t i = 0; i < a.values.values.size(); ++i)
    EXPECT_NEAR(a.values.values[i], b.values.values[i], 1e-9);
}

TEST(LogFbank, DoublingAmplitude) {
  auto wave = random_wave(21, 16000, 0.3);
  // A silent stretch so some entries sit on the floor.
  for (std::size_t t = 6000; t < 9000; ++t) wave[t] = 0;
  auto twice = wave;
  for (auto& v : twice) v *= 2;
  auto a = log_fbank(wave);
  auto b = log_fbank(twice);
  const double floor = std::log(1e-10);
  std::size_t floored = 0;
  for (std::size_t i = 0; i < a.values.values.size(); ++i) {
    const double d = b.values.values[i] - a.values.values[i];
    EXPECT_LE(d, std::log(4.0) + 1e-9);
    if (a.values.values[i] == floor && b.values.values[i] == floor) ++floored;
  }
  EXPECT_GT(floored, 0u);
}

TEST(LogFbank, HopShiftMovesRowsByOne) {
  auto wave = random_wave(30);
  std::vector<double> shifted(16000, 0.0);
  for (std::size_t t = 160; t < 16000; ++t) shifted[t] = wave[t - 160];
  auto a = log_fbank(wave);
  auto b = log_fbank(shifted);
  for (std::size_t f = 1; f + 1 < 98; ++f)
    for (std::size_t m = 0; m < 64; ++m) EXPECT_NEAR(b(f + 1, m), a(f, m), 1e-9);
}

TEST(FeatureDump, RoundTripAsFloat) {
  TempDir dir;
  auto feat = log_fbank(random_wave(4));
  write_feature_dump(dir / "f.bin", feat);
  auto bytes = cosmix::testing::slurp(dir / "f.bin");
  ASSERT_EQ(bytes.size(), 16u + 4u * 98u * 64u);
  EXPECT_EQ(bytes.substr(0, 4), "FBNK");
  auto back = read_feature_dump(dir / "f.bin");
  ASSERT_EQ(back.rows(), 98u);
  for (std::size_t i = 0; i < feat.values.values.size(); ++i)
    EXPECT_EQ(back.values.values[i], static_cast<float>(feat.values.values[i]));
  cosmix::testing::write_bytes(dir / "g.bin", bytes.substr(0, 100));
  EXPECT_THROW(read_feature_dump(dir / "g.bin"), FormatError);
}

}  // namespace
}  // namespace cosmix::features
