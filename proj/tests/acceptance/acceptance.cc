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


// Acceptance checks, one PASS/FAIL line per criterion. Criterion 7 needs a
// Speech Commands V2 tree in COSMIX_SPEECH_COMMANDS and never gates the exit
// code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cosmix/audio_dataset.h"
#include "cosmix/augment.h"
#include "cosmix/autodiff.h"
#include "cosmix/features.h"
#include "cosmix/model.h"
#include "cosmix/run_config.h"
#include "cosmix/trainer.h"
#include "cosmix/util.h"
#include "cosmix/verify.h"

namespace {

namespace fs = std::filesystem;
using namespace cosmix;
using Clock = std::chrono::steady_clock;

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kFail;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(detail)}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
  std::random_device rd;
  auto dir = fs::temp_directory_path() / ("cosmix_acceptance_" + name + "_" + std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

// ---- 1

Outcome verification_suite() {
  const auto t0 = Clock::now();
  const auto report = verify::run_verification();
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string failed;
  for (const auto& s : report.suites) {
    if (s.name.starts_with("grad.")) worst = std::max(worst, s.max_error);
    if (!s.passed) failed += " " + s.name;
  }
  auto detail = fmt("%.0f suites, worst gradient rel err %.2e, %.1f s", static_cast<double>(report.suites.size()),
                    worst, secs);
  if (!failed.empty()) detail += ", failed:" + failed;
  return pass_if(report.passed() && secs < 120.0, detail);
}

// ---- 2

Outcome loss_identities() {
  std::mt19937_64 rng(2026);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double err_a = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(10), yi(10, 0.0), yj(10, 0.0);
    for (auto& v : z) v = n(rng);
    yi[cls(rng)] = 1;
    yj[cls(rng)] = 1;
    const double lam = u(rng);
    ad::Tape<double> tape;
    const double got =
        train::loss_mix(tape.constant({1, 10}, z), yi, yj, std::vector<double>{lam}, train::ClsLoss::kSoftmaxCE)
            .item();
    double mx = *std::max_element(z.begin(), z.end()), se = 0;
    for (double v : z) se += std::exp(v - mx);
    double want = 0;
    for (std::size_t k = 0; k < 10; ++k) want -= (lam * yi[k] + (1 - lam) * yj[k]) * (z[k] - mx - std::log(se));
    err_a = std::max(err_a, std::abs(got - want));
  }

  double err_b = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(128), b(128);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    ad::Tape<double> tape;
    auto ua = ad::l2_normalize(tape.constant({1, 128}, a));
    auto ub = ad::l2_normalize(tape.constant({1, 128}, b));
    const double lcos = train::loss_cos(ua, ad::stop_gradient(ub)).item();
    double dist = 0;
    for (std::size_t k = 0; k < 128; ++k) dist += std::pow(ua.values()[k] - ub.values()[k], 2);
    err_b = std::max(err_b, std::abs(dist - (2 + 2 * lcos)));
  }

  std::size_t mixed = 0, bad_sum = 0;
  std::vector<std::size_t> anchors(4096);
  for (std::size_t r = 0; r < anchors.size(); ++r) anchors[r] = r % 500;
  for (const auto& row : train::plan_batch(anchors, 500, {10.0, 0.5}, 9, 1, 0)) {
    const auto w = train::lambda_weight(row.is_mixed, row.lambda);
    if (!row.is_mixed) continue;
    ++mixed;
    if (w.lambda_i + *w.lambda_j != 1.0) ++bad_sum;
  }
  return pass_if(err_a <= 1e-9 && err_b <= 1e-9 && bad_sum == 0 && mixed > 0,
                 fmt("mix vs soft CE %.1e, distance identity %.1e, %.0f mixed rows with %.0f bad weight sums",
                     err_a, err_b, static_cast<double>(mixed), static_cast<double>(bad_sum)));
}

// ---- 3

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

Outcome feature_pipeline() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool shapes_ok = true;
  double power_err = 0, fbank_err = 0;
  const features::FBankSpec spec;
  const auto bank = features::mel_filterbank(spec);
  for (int clip = 0; clip < 4; ++clip) {
    std::vector<double> wave(16000);
    const double amp = std::pow(10.0, -clip);
    for (auto& v : wave) v = amp * u(rng);
    const auto feat = features::log_fbank(wave);
    shapes_ok = shapes_ok && feat.rows() == 98 && feat.cols() == 64;
    const auto power = features::stft_power(wave);
    for (std::size_t f = clip; f < 98; f += 11) {
      std::vector<std::complex<double>> frame(512, 0.0);
      for (std::size_t i = 0; i < 400; ++i)
        frame[i] = wave[f * 160 + i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 400.0));
      const auto spec_f = naive_dft(frame);
      double err = 0, norm = 0;
      std::vector<double> ref(257);
      for (std::size_t k = 0; k < 257; ++k) {
        ref[k] = std::norm(spec_f[k]);
        err += std::pow(power(f, k) - ref[k], 2);
        norm += ref[k] * ref[k];
      }
      power_err = std::max(power_err, std::sqrt(err / norm));
      for (std::size_t m = 0; m < 64; ++m) {
        double e = 0;
        for (std::size_t k = 0; k < 257; ++k) e += bank(m, k) * ref[k];
        const double want = std::log(std::max(e, spec.log_floor));
        fbank_err = std::max(fbank_err, std::abs(feat(f, m) - want) / std::max(1.0, std::abs(want)));
      }
    }
  }
  return pass_if(shapes_ok && power_err <= 1e-9 && fbank_err <= 1e-9,
                 std::string("98x64 ") + (shapes_ok ? "ok" : "BAD") +
                     fmt(", power spectrum rel err %.1e, log fbank rel err %.1e", power_err, fbank_err));
}

// ---- 4

Outcome beta_sampler() {
  auto rng = counter_rng(4, {0});
  const std::size_t n = 100000;
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = augment::sample_beta({10.0, 1.0}, rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double target = 1.0 / 84.0;
  return pass_if(mean >= 0.49 && mean <= 0.51 && std::abs(var - target) <= 0.1 * target,
                 fmt("mean %.4f, variance %.5f (target %.5f)", mean, var, target));
}

// ---- 5

train::RunConfig nesting_config(train::Mode mode) {
  train::RunConfig cfg;
  cfg.model = model::tiny_config(11);
  cfg.train.batch_size = 16;
  cfg.train.epochs = 2;
  cfg.train.seed = 11;
  cfg.mode = mode;
  return cfg;
}

Outcome mode_nesting() {
  const auto corpus = audio::synth_dataset(15, 0.3, 5);
  const auto source = train::ClipSource::from_synthetic(corpus);
  auto cosmix_b0 = nesting_config(train::Mode::kCosmix);
  cosmix_b0.train.beta_penalty = 0.0;
  const auto a = train::train(cosmix_b0, source).batch_losses;
  const auto b = train::train(nesting_config(train::Mode::kMixup), source).batch_losses;
  auto mixup_r0 = nesting_config(train::Mode::kMixup);
  mixup_r0.train.beta_params.mix_ratio = 0.0;
  const auto c = train::train(mixup_r0, source).batch_losses;
  const auto d = train::train(nesting_config(train::Mode::kBaseline), source).batch_losses;
  const bool ok = !a.empty() && a == b && !c.empty() && c == d;
  return pass_if(ok, std::string("cosmix(beta=0) vs mixup ") + (a == b ? "identical" : "DIFFER") +
                         ", mixup(ratio=0) vs baseline " + (c == d ? "identical" : "DIFFER") +
                         fmt(" over %.0f batches", static_cast<double>(a.size())));
}

// ---- 6

Outcome desk_ordering() {
  const auto t0 = Clock::now();
  const auto corpus = audio::synth_dataset(35, 0.3, 1);
  const auto source = train::ClipSource::from_synthetic(corpus);
  const auto test = train::FeatureSet::extract(source, audio::Split::kTest);
  const train::Mode modes[3] = {train::Mode::kBaseline, train::Mode::kMixup, train::Mode::kCosmix};
  // Correct test clips summed over seeds; equal test sets make this an exact
  // comparison of mean accuracy.
  std::size_t correct[3] = {0, 0, 0};
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::printf("  seed %llu:", static_cast<unsigned long long>(seed));
    for (int m = 0; m < 3; ++m) {
      train::RunConfig cfg;
      cfg.mode = modes[m];
      cfg.train.epochs = 40;
      cfg.train.batch_size = 32;
      cfg.train.seed = seed;
      cfg.model.init_seed = seed;
      auto result = train::train(cfg, source);
      auto params = result.best.params;
      const auto eval = train::evaluate(test, params, result.best.model_config());
      std::size_t hits = 0;
      for (std::size_t k = 0; k < eval.confusion.size(); ++k) hits += eval.confusion[k][k];
      correct[m] += hits;
      if (m == 0) total += eval.total;
      const double acc = eval.accuracy;
      std::printf(" %s %.4f", std::string(train::to_string(modes[m])).c_str(), acc);
      std::fflush(stdout);
    }
    std::printf("\n");
  }
  const double secs = seconds_since(t0);
  const bool ok = correct[2] >= correct[1] && correct[2] >= correct[0] &&
                  10 * correct[2] >= 9 * total && secs < 900.0;
  const auto mean = [&](int m) { return static_cast<double>(correct[m]) / static_cast<double>(total); };
  return pass_if(ok, fmt("mean test acc baseline %.4f, mixup %.4f, cosmix %.4f; %.0f s", mean(0), mean(1),
                         mean(2), secs));
}

// ---- 7

Outcome full_data() {
  const char* root_env = std::getenv("COSMIX_SPEECH_COMMANDS");
  if (root_env == nullptr || !fs::is_directory(root_env)) {
    return {Outcome::kSkip, "set COSMIX_SPEECH_COMMANDS to a Speech Commands V2 root to run"};
  }
  const fs::path root = root_env;
  const auto t0 = Clock::now();
  const auto full =
      audio::build_manifest(root, root / "validation_list.txt", root / "testing_list.txt");
  const auto trimmed = audio::trim_by_speaker(full, 0.05, 0);
  std::array<double, audio::kNumKeywords> minutes{};
  for (std::size_t e : trimmed.indices(audio::Split::kTrain)) {
    const auto& entry = trimmed.entries[e];
    minutes[static_cast<std::size_t>(entry.label.index())] +=
        static_cast<double>(audio::read_pcm16(entry.path).size()) / audio::kSampleRate / 60.0;
  }
  bool minutes_ok = true;
  for (double m : minutes) minutes_ok = minutes_ok && std::abs(m - 2.5) <= 0.5;

  train::RunConfig cfg;
  cfg.mode = train::Mode::kCosmix;
  const auto source = train::ClipSource::from_manifest(trimmed);
  auto result = train::train(cfg, source);
  auto params = result.best.params;
  const auto test = train::FeatureSet::extract(source, audio::Split::kTest);
  const double acc = train::evaluate(test, params, result.best.model_config()).accuracy;
  const auto [lo, hi] = std::minmax_element(minutes.begin(), minutes.end());
  return pass_if(minutes_ok && acc >= 0.85,
                 fmt("train minutes per keyword %.2f..%.2f, cosmix test acc %.4f, %.0f s", *lo, *hi, acc,
                     seconds_since(t0)));
}

// ---- 8

Outcome determinism() {
  const auto corpus = audio::synth_dataset(15, 0.3, 8);
  const auto source = train::ClipSource::from_synthetic(corpus);
  const auto dir = scratch_dir("determinism");
  auto cfg = nesting_config(train::Mode::kCosmix);
  cfg.train.epochs = 3;

  auto run_into = [&](const std::string& name, const train::RunConfig& c,
                      std::optional<std::string> resume_from = std::nullopt) {
    train::TrainOptions o;
    o.run_dir = dir / name;
    if (resume_from) {
      o.resume = model::load_checkpoint(dir / *resume_from / "last.ckpt");
      o.resume_best = model::load_checkpoint(dir / *resume_from / "best.ckpt");
    }
    train::train(c, source, o);
  };
  run_into("a", cfg);
  run_into("b", cfg);
  auto first = cfg;
  first.train.epochs = 1;
  run_into("r", first);
  run_into("r", cfg, "r");

  const bool same_stream = read_file(dir / "a/metrics.jsonl") == read_file(dir / "b/metrics.jsonl");
  const bool resumed_stream = read_file(dir / "a/metrics.jsonl") == read_file(dir / "r/metrics.jsonl");
  const bool resumed_ckpt = read_file(dir / "a/last.ckpt") == read_file(dir / "r/last.ckpt");
  fs::remove_all(dir);
  std::string detail = std::string("repeat run metrics ") + (same_stream ? "identical" : "DIFFER") +
                       ", resumed metrics " + (resumed_stream ? "identical" : "DIFFER") +
                       ", resumed last.ckpt " + (resumed_ckpt ? "identical" : "DIFFERS");
  return pass_if(same_stream && resumed_stream && resumed_ckpt, detail);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    bool gating;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "verification suite", true, verification_suite},
      {2, "loss identities", true, loss_identities},
      {3, "feature pipeline", true, feature_pipeline},
      {4, "beta sampler", true, beta_sampler},
      {5, "mode nesting", true, mode_nesting},
      {6, "desk-scale ordering", true, desk_ordering},
      {7, "full-data check (optional)", false, full_data},
      {8, "determinism and resume", true, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kSkip ? "SKIP" : "FAIL";
    std::printf("criterion %d %s: %s (%s)\n", c.id, tag, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (o.kind == Outcome::kFail && c.gating) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
