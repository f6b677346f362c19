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

#include "cosmix/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>

#include "cosmix/audio_dataset.h"
#include "cosmix/augment.h"
#include "cosmix/autodiff.h"
#include "cosmix/errors.h"
#include "cosmix/features.h"
#include "cosmix/model.h"
#include "cosmix/trainer.h"
#include "cosmix/util.h"

namespace cosmix::verify {

namespace {

using ad::ParameterSet;
using ad::Tape;
using ad::Tensor;

constexpr double kGradTol = 1e-4;
constexpr std::uint64_t kSeed = 20260418;

std::vector<double> normal_values(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Values bounded away from zero, so relu kinks stay outside the FD stencil.
std::vector<double> off_zero_values(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(n);
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return v;
}

ad::Parameter<double>& add_param(ParameterSet<double>& ps, const std::string& name, ad::Shape shape,
                                 std::vector<double> values) {
  auto& p = ps.add(name, std::move(shape));
  p.value = std::move(values);
  return p;
}

// Contracts any tensor to a scalar with fixed random weights.
Tensor<double> probe(const Tensor<double>& y, std::uint64_t salt) {
  const std::size_t n = y.size();
  Rng rng = counter_rng(kSeed, {salt, n});
  const auto w = normal_values(n, rng);
  return ad::weighted_sum(ad::reshape(y, {n}), std::span<const double>(w));
}

SuiteResult grad_result(const std::string& name, const ad::GradCheckReport& r, double tol) {
  SuiteResult s;
  s.name = name;
  s.max_error = r.max_rel_error;
  s.tolerance = tol;
  const bool few_kinks = r.kinked * 100 <= r.coords_checked;
  s.passed = r.max_rel_error < tol && r.coords_checked > 0 && few_kinks;
  if (!few_kinks) {
    s.detail = std::to_string(r.kinked) + " of " + std::to_string(r.coords_checked + r.kinked) +
               " coordinates straddle a relu kink";
  } else if (!s.passed) {
    s.detail = "gradient mismatch at " + r.worst_param + "[" + std::to_string(r.worst_index) + "]";
  } else if (r.kinked > 0) {
    s.detail = std::to_string(r.kinked) + " coordinates at a relu kink skipped";
  }
  return s;
}

SuiteResult grad_dense() {
  Rng rng = counter_rng(kSeed, {1});
  ParameterSet<double> ps;
  add_param(ps, "x", {4, 3}, normal_values(12, rng));
  add_param(ps, "W", {3, 2}, normal_values(6, rng));
  add_param(ps, "b", {2}, normal_values(2, rng));
  auto r = ad::finite_difference_check(
      [](Tape<double>& t, ParameterSet<double>& p) {
        return probe(ad::dense(t.bind(p.at("x")), t.bind(p.at("W")), t.bind(p.at("b"))), 1);
      },
      ps);
  return grad_result("grad.dense", r, 1e-6);
}

SuiteResult grad_conv2d() {
  Rng rng = counter_rng(kSeed, {2});
  ParameterSet<double> ps;
  add_param(ps, "x", {2, 2, 5, 6}, normal_values(120, rng));
  add_param(ps, "k", {3, 2, 3, 3}, normal_values(54, rng));
  add_param(ps, "b", {3}, normal_values(3, rng));
  ad::GradCheckReport worst;
  for (std::size_t stride : {1, 2}) {
    auto r = ad::finite_difference_check(
        [stride](Tape<double>& t, ParameterSet<double>& p) {
          auto y = ad::conv2d(t.bind(p.at("x")), t.bind(p.at("k")), t.bind(p.at("b")),
                              ad::Conv2dOptions{stride, 1});
          return probe(y, 2 + stride);
        },
        ps);
    if (r.max_rel_error >= worst.max_rel_error) {
      r.coords_checked += worst.coords_checked;
      r.kinked += worst.kinked;
      worst = r;
    } else {
      worst.coords_checked += r.coords_checked;
      worst.kinked += r.kinked;
    }
  }
  return grad_result("grad.conv2d", worst, kGradTol);
}

SuiteResult grad_relu_pool() {
  Rng rng = counter_rng(kSeed, {3});
  ParameterSet<double> ps;
  add_param(ps, "x", {2, 3, 4, 5}, off_zero_values(120, rng));
  auto r = ad::finite_difference_check(
      [](Tape<double>& t, ParameterSet<double>& p) {
        auto x = t.bind(p.at("x"));
        return ad::add(probe(ad::relu(x), 5), probe(ad::global_avg_pool(x), 6));
      },
      ps);
  return grad_result("grad.relu_pool", r, kGradTol);
}

SuiteResult grad_l2_normalize() {
  Rng rng = counter_rng(kSeed, {4});
  ParameterSet<double> ps;
  add_param(ps, "v", {5, 7}, normal_values(35, rng));
  auto r = ad::finite_difference_check(
      [](Tape<double>& t, ParameterSet<double>& p) { return probe(ad::l2_normalize(t.bind(p.at("v"))), 7); },
      ps);
  return grad_result("grad.l2_normalize", r, kGradTol);
}

SuiteResult grad_cosine() {
  Rng rng = counter_rng(kSeed, {5});
  ParameterSet<double> ps;
  add_param(ps, "a", {5, 6}, normal_values(30, rng));
  add_param(ps, "b", {5, 6}, normal_values(30, rng));
  auto r = ad::finite_difference_check(
      [](Tape<double>& t, ParameterSet<double>& p) {
        return probe(ad::cosine_similarity(t.bind(p.at("a")), t.bind(p.at("b"))), 8);
      },
      ps);
  return grad_result("grad.cosine_similarity", r, kGradTol);
}

std::vector<double> simplex_rows(std::size_t B, std::size_t K, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> t(B * K);
  for (std::size_t r = 0; r < B; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += t[r * K + k] = u(rng);
    for (std::size_t k = 0; k < K; ++k) t[r * K + k] /= s;
  }
  return t;
}

SuiteResult grad_softmax_ce() {
  Rng rng = counter_rng(kSeed, {6});
  ParameterSet<double> ps;
  add_param(ps, "z", {4, 10}, normal_values(40, rng, 2.0));
  const auto target = simplex_rows(4, 10, rng);
  auto r = ad::finite_difference_check(
      [&](Tape<double>& t, ParameterSet<double>& p) {
        return ad::softmax_cross_entropy(t.bind(p.at("z")), t.constant({4, 10}, target));
      },
      ps);
  return grad_result("grad.softmax_cross_entropy", r, kGradTol);
}

SuiteResult grad_sigmoid_bce() {
  Rng rng = counter_rng(kSeed, {7});
  ParameterSet<double> ps;
  add_param(ps, "z", {4, 10}, normal_values(40, rng, 2.0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> target(40);
  for (auto& x : target) x = u(rng);
  auto r = ad::finite_difference_check(
      [&](Tape<double>& t, ParameterSet<double>& p) {
        return ad::sigmoid_bce(t.bind(p.at("z")), t.constant({4, 10}, target));
      },
      ps);
  return grad_result("grad.sigmoid_bce", r, kGradTol);
}

SuiteResult grad_elementwise() {
  Rng rng = counter_rng(kSeed, {8});
  ParameterSet<double> ps;
  add_param(ps, "a", {3, 4}, normal_values(12, rng));
  add_param(ps, "b", {3, 4}, normal_values(12, rng));
  const std::vector<double> w = normal_values(12, rng);
  auto r = ad::finite_difference_check(
      [&](Tape<double>& t, ParameterSet<double>& p) {
        auto a = t.bind(p.at("a"));
        auto b = t.bind(p.at("b"));
        // `a` feeds three paths, so its gradient is an accumulation.
        auto prod = ad::mul(ad::add(a, ad::scale(b, 0.7)), a);
        auto flat = ad::reshape(prod, {12});
        return ad::add(ad::add(ad::weighted_sum(flat, std::span<const double>(w)), ad::mean(a)),
                       ad::sum(ad::mul(b, b)));
      },
      ps);
  return grad_result("grad.elementwise", r, kGradTol);
}

// sum(x * sg(x)): the gradient must be x itself. Checked analytically and
// against finite differences of the composite with the sg branch frozen.
SuiteResult grad_stop_gradient() {
  Rng rng = counter_rng(kSeed, {9});
  const auto x0 = normal_values(10, rng);
  ParameterSet<double> live;
  add_param(live, "x", {10}, x0);
  {
    Tape<double> t;
    auto x = t.bind(live.at("x"));
    auto loss = ad::sum(ad::mul(x, ad::stop_gradient(x)));
    t.backward(loss);
  }
  double exact_err = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    exact_err = std::max(exact_err, std::abs(live.at("x").grad[i] - x0[i]) /
                                        std::max(std::abs(x0[i]), 1e-8));
  }
  ParameterSet<double> frozen;
  add_param(frozen, "x", {10}, x0);
  auto r = ad::finite_difference_check(
      [&](Tape<double>& t, ParameterSet<double>& p) {
        return ad::sum(ad::mul(t.bind(p.at("x")), t.constant({10}, x0)));
      },
      frozen);
  double fd_vs_sg = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    fd_vs_sg = std::max(fd_vs_sg, std::abs(frozen.at("x").grad[i] - live.at("x").grad[i]) /
                                      std::max(std::abs(x0[i]), 1e-8));
  }
  r.max_rel_error = std::max({r.max_rel_error, exact_err, fd_vs_sg});
  return grad_result("grad.stop_gradient", r, kGradTol);
}

train::MixedBatch random_batch(std::size_t B, Rng& rng) {
  constexpr std::size_t F = features::kFrames * features::kMelBins;
  constexpr std::size_t K = audio::kNumKeywords;
  train::MixedBatch batch;
  batch.size = B;
  // Per-row offsets and scales keep the three views' embeddings apart.
  std::uniform_real_distribution<double> offset(-1.0, 1.0), spread(0.5, 2.0);
  auto view = [&]() {
    std::vector<double> v = normal_values(B * F, rng);
    for (std::size_t r = 0; r < B; ++r) {
      const double mu = offset(rng), sd = spread(rng);
      for (std::size_t i = 0; i < F; ++i) v[r * F + i] = mu + sd * v[r * F + i];
    }
    return v;
  };
  batch.feats_mix = view();
  batch.feats_i = view();
  batch.feats_j = view();
  batch.y_i.assign(B * K, 0.0);
  batch.y_j.assign(B * K, 0.0);
  std::uniform_int_distribution<std::size_t> cls(0, K - 1);
  augment::BetaParams beta;
  for (std::size_t r = 0; r < B; ++r) {
    const bool mixed = r % 2 == 0;
    const std::size_t ci = cls(rng);
    const std::size_t cj = mixed ? cls(rng) : ci;
    batch.y_i[r * K + ci] = 1.0;
    batch.y_j[r * K + cj] = 1.0;
    batch.lambdas.push_back(mixed ? augment::sample_beta(beta, rng) : 1.0);
    batch.is_mixed.push_back(mixed ? 1 : 0);
    batch.plan.push_back(train::RowPlan{r, r, batch.lambdas.back(), mixed});
  }
  return batch;
}

SuiteResult grad_full_loss() {
  Rng rng = counter_rng(kSeed, {10});
  const model::ModelConfig cfg = model::tiny_config(kSeed);
  ParameterSet<double> params = model::init_params<double>(cfg);
  // Nonzero biases so every parameter carries a generic gradient.
  for (auto& p : params) {
    if (p.shape.size() == 1) p.value = normal_values(p.value.size(), rng, 0.1);
  }
  const train::MixedBatch batch = random_batch(4, rng);
  // Targets only enter as constants, so any values are a valid evaluation
  // point; random ones keep the cosine terms away from saturation.
  const auto pi = normal_values(batch.size * cfg.proj_dim, rng);
  const auto pj = normal_values(batch.size * cfg.proj_dim, rng);
  auto r = ad::finite_difference_check(
      [&](Tape<double>& t, ParameterSet<double>& p) {
        return train::total_loss_with_targets<double>(t, p, cfg, batch, 0.5,
                                                       train::ClsLoss::kSoftmaxCE, pi, pj)
            .total;
      },
      params, 1e-5, 0, 0,
      // No relu lies downstream of these, so a wider step is safe and keeps
      // their small gradients above the rounding floor of the loss.
      {{"classifier.weight", 1e-3},
       {"classifier.bias", 1e-3},
       {"projector.fc1.weight", 1e-3},
       {"projector.fc1.bias", 1e-3}});

  // The in-graph stop-gradient branch must match injected model targets.
  const auto [mi, mj] = train::projection_targets(params, cfg, batch);
  std::vector<std::vector<double>> injected;
  {
    params.zero_grad();
    Tape<double> tape;
    auto terms = train::total_loss_with_targets<double>(tape, params, cfg, batch, 0.5,
                                                        train::ClsLoss::kSoftmaxCE, mi, mj);
    tape.backward(terms.total);
    for (const auto& p : params) injected.push_back(p.grad);
  }
  params.zero_grad();
  Tape<double> tape;
  auto terms = train::total_loss<double>(tape, params, cfg, batch, 0.5, train::ClsLoss::kSoftmaxCE,
                                         train::TargetBranch::kStopGradient);
  tape.backward(terms.total);
  std::size_t k = 0;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const double a = p.grad[i], b = injected[k][i];
      const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = p.name + " (stop-gradient branch)";
        r.worst_index = i;
      }
    }
    ++k;
  }
  return grad_result("grad.full_loss", r, kGradTol);
}

SuiteResult identity_mix_ce() {
  constexpr std::size_t B = 4, K = audio::kNumKeywords;
  Rng rng = counter_rng(kSeed, {11});
  std::uniform_int_distribution<std::size_t> cls(0, K - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  for (int c = 0; c < 1000; ++c) {
    const auto z = normal_values(B * K, rng, 3.0);
    std::vector<double> yi(B * K, 0.0), yj(B * K, 0.0), soft(B * K), lam(B);
    for (std::size_t r = 0; r < B; ++r) {
      yi[r * K + cls(rng)] = 1.0;
      yj[r * K + cls(rng)] = 1.0;
      lam[r] = unit(rng);
      const auto mixed = augment::mix_labels(std::span(yi).subspan(r * K, K),
                                             std::span(yj).subspan(r * K, K), lam[r]);
      std::copy(mixed.begin(), mixed.end(), soft.begin() + static_cast<std::ptrdiff_t>(r * K));
    }
    Tape<double> t;
    t.set_grad_enabled(false);
    auto logits = t.constant({B, K}, z);
    const double a =
        train::loss_mix<double>(logits, yi, yj, lam, train::ClsLoss::kSoftmaxCE).item();
    const double b = ad::softmax_cross_entropy(logits, t.constant({B, K}, soft)).item();
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1.0));
  }
  SuiteResult s{"identity.mix_ce", worst <= 1e-9, worst, 1e-9, 0, ""};
  if (!s.passed) s.detail = "mixed-label CE differs from soft-label CE";
  return s;
}

SuiteResult identity_cosine_mse() {
  constexpr std::size_t B = 8, D = 16;
  Rng rng = counter_rng(kSeed, {12});
  double worst = 0;
  for (int c = 0; c < 1000; ++c) {
    auto u = normal_values(B * D, rng);
    auto v = normal_values(B * D, rng);
    for (auto* w : {&u, &v}) {
      for (std::size_t r = 0; r < B; ++r) {
        double n = 0;
        for (std::size_t d = 0; d < D; ++d) n += (*w)[r * D + d] * (*w)[r * D + d];
        n = std::sqrt(n);
        for (std::size_t d = 0; d < D; ++d) (*w)[r * D + d] /= n;
      }
    }
    Tape<double> t;
    t.set_grad_enabled(false);
    auto lc = train::loss_cos<double>(t.constant({B, D}, u), t.constant({B, D}, v));
    for (std::size_t r = 0; r < B; ++r) {
      double sq = 0;
      for (std::size_t d = 0; d < D; ++d) sq += std::pow(u[r * D + d] - v[r * D + d], 2);
      worst = std::max(worst, std::abs(sq - (2.0 + 2.0 * lc.values()[r])));
    }
  }
  SuiteResult s{"identity.cosine_mse", worst <= 1e-9, worst, 1e-9, 0, ""};
  if (!s.passed) s.detail = "squared distance of unit vectors != 2 + 2 L_cos";
  return s;
}

SuiteResult identity_lambda_weights() {
  double worst = 0;
  std::size_t checked = 0;
  for (double alpha : {0.2, 0.5, 1.0, 10.0}) {
    Rng rng = counter_rng(kSeed, {13, static_cast<std::uint64_t>(alpha * 10)});
    augment::BetaParams beta{alpha, 1.0};
    for (int i = 0; i < 25000; ++i) {
      const auto w = train::lambda_weight(true, augment::sample_beta(beta, rng));
      worst = std::max(worst, std::abs((w.lambda_i + w.lambda_j.value_or(0.0)) - 1.0));
      ++checked;
    }
  }
  const auto unmixed = train::lambda_weight(false, 1.0);
  const bool ok = worst == 0.0 && unmixed.lambda_i == 1.0 && !unmixed.lambda_j && checked > 0;
  SuiteResult s{"identity.lambda_weights", ok, worst, 0.0, 0, ""};
  if (!ok) s.detail = "mixed-row weights do not sum to exactly 1";
  return s;
}

SuiteResult sampler_beta_moments() {
  constexpr int n = 100000;
  Rng rng = counter_rng(kSeed, {14});
  augment::BetaParams beta{10.0, 0.5};
  double sum = 0, sum_sq = 0;
  std::vector<double> draws(n);
  for (auto& x : draws) {
    x = augment::sample_beta(beta, rng);
    sum += x;
  }
  const double mean = sum / n;
  for (double x : draws) sum_sq += (x - mean) * (x - mean);
  const double var = sum_sq / (n - 1);
  const double var_rel = std::abs(var * 84.0 - 1.0);
  const bool ok = mean >= 0.49 && mean <= 0.51 && var_rel <= 0.10;
  SuiteResult s{"sampler.beta_moments", ok, std::max(std::abs(mean - 0.5) / 0.01, var_rel), 0.10, 0, ""};
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mean=%.5f var=%.6f (1/84=%.6f)", mean, var, 1.0 / 84.0);
  s.detail = buf;
  if (!ok) s.detail = "Beta(10,10) moments out of range: " + s.detail;
  return s;
}

SuiteResult features_dft_oracle() {
  const features::FBankSpec spec;
  Rng rng = counter_rng(kSeed, {15});
  const auto wave = normal_values(audio::kClipSamples, rng, 0.2);
  const features::Matrix power = features::stft_power(wave, spec);
  const auto win = static_cast<std::size_t>(spec.win_length);
  const auto hop = static_cast<std::size_t>(spec.hop_length);
  const auto n_fft = static_cast<std::size_t>(spec.n_fft);
  const auto window = features::periodic_hann(win);
  const std::size_t bins = spec.n_bins();
  double worst = 0;
  for (std::size_t f = 0; f < power.rows; ++f) {
    std::vector<double> frame(n_fft, 0.0);
    for (std::size_t n = 0; n < win; ++n) frame[n] = wave[f * hop + n] * window[n];
    double peak = 0, err = 0;
    std::vector<double> naive(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t n = 0; n < n_fft; ++n) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n % n_fft) /
                           static_cast<double>(n_fft);
        acc += frame[n] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      naive[k] = std::norm(acc);
      peak = std::max(peak, naive[k]);
    }
    for (std::size_t k = 0; k < bins; ++k) err = std::max(err, std::abs(power.values[f * power.cols + k] - naive[k]));
    worst = std::max(worst, err / peak);
  }
  SuiteResult s{"features.dft_oracle", worst <= 1e-9, worst, 1e-9, 0, ""};
  if (!s.passed) s.detail = "power spectrum differs from the naive DFT";
  return s;
}

SuiteResult features_fbank_shape() {
  Rng rng = counter_rng(kSeed, {16});
  std::size_t bad = 0;
  for (std::size_t len : {1000, 8000, 15999, 16000, 16001, 24000}) {
    const auto wave = audio::pad_or_trim(normal_values(len, rng, 0.1));
    const auto feat = features::log_fbank(wave);
    if (feat.values.rows != features::kFrames || feat.values.cols != features::kMelBins ||
        feat.values.values.size() != features::kFrames * features::kMelBins) {
      ++bad;
    }
  }
  SuiteResult s{"features.fbank_shape", bad == 0, static_cast<double>(bad), 0.0, 0, ""};
  if (bad) s.detail = "log_fbank output is not 98x64";
  return s;
}

using SuiteFn = SuiteResult (*)();

struct Suite {
  const char* name;
  SuiteFn fn;
};

constexpr Suite kSuites[] = {
    {"grad.dense", grad_dense},
    {"grad.conv2d", grad_conv2d},
    {"grad.relu_pool", grad_relu_pool},
    {"grad.l2_normalize", grad_l2_normalize},
    {"grad.cosine_similarity", grad_cosine},
    {"grad.softmax_cross_entropy", grad_softmax_ce},
    {"grad.sigmoid_bce", grad_sigmoid_bce},
    {"grad.elementwise", grad_elementwise},
    {"grad.stop_gradient", grad_stop_gradient},
    {"grad.full_loss", grad_full_loss},
    {"identity.mix_ce", identity_mix_ce},
    {"identity.cosine_mse", identity_cosine_mse},
    {"identity.lambda_weights", identity_lambda_weights},
    {"sampler.beta_moments", sampler_beta_moments},
    {"features.dft_oracle", features_dft_oracle},
    {"features.fbank_shape", features_fbank_shape},
};

}  // namespace

bool Report::passed() const {
  return !suites.empty() &&
         std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

std::string Report::to_text() const {
  std::string out;
  for (const auto& s : suites) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-4s %-28s max_err=%.3e tol=%.1e %.2fs", s.passed ? "PASS" : "FAIL",
                  s.name.c_str(), s.max_error, s.tolerance, s.seconds);
    out += buf;
    if (!s.detail.empty()) out += "  " + s.detail;
    out += '\n';
  }
  return out;
}

std::vector<std::string> suite_names() {
  std::vector<std::string> names;
  for (const auto& s : kSuites) names.emplace_back(s.name);
  return names;
}

Report run_verification(const std::function<void(const SuiteResult&)>& on_suite) {
  Report report;
  for (const auto& suite : kSuites) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    try {
      r = suite.fn();
    } catch (const std::exception& e) {
      r.name = suite.name;
      r.passed = false;
      r.detail = e.what();
    }
    r.name = suite.name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_suite) on_suite(r);
    report.suites.push_back(std::move(r));
  }
  return report;
}

}  // namespace cosmix::verify
