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


#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "cosmix/audio_dataset.h"
#include "cosmix/model.h"
#include "cosmix/run_config.h"
#include "cosmix/util.h"
#include "test_support.h"

namespace {

namespace fs = std::filesystem;
using cosmix::testing::TempDir;

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + COSMIX_CLI_PATH + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = dir_ / "corpus";
    manifest_ = (dir_ / "syn.tsv").string();
    auto r = run("prepare --data-root " + root_.string() + " --manifest " + manifest_ +
                 " --synthetic 25 --seed 3");
    ASSERT_EQ(r.code, 0) << r.out;
    cosmix::train::RunConfig cfg;
    cfg.model = cosmix::model::tiny_config();
    cfg.train.batch_size = 16;
    cfg.train.epochs = 1;
    config_ = (dir_ / "run.cfg").string();
    cosmix::write_file_atomic(config_, cfg.to_text());
  }

  std::string train_args(const std::string& run_dir) const {
    return "train --manifest " + manifest_ + " --config " + config_ + " --run-dir " + run_dir;
  }

  TempDir dir_;
  fs::path root_;
  std::string manifest_;
  std::string config_;
};

TEST(CliArgs, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --manifest x --run-dir y --epochs abc").code, 2);
}

TEST(CliArgs, InvalidDatasetRootWritesNothing) {
  TempDir dir;
  const auto out = dir / "m.tsv";
  auto r = run("prepare --data-root " + (dir / "missing").string() + " --manifest " + out.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("missing"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, PrepareReportsCounts) {
  auto manifest = cosmix::audio::read_manifest(manifest_);
  EXPECT_EQ(manifest.count(cosmix::audio::Split::kTrain), 150u);
  EXPECT_EQ(manifest.count(cosmix::audio::Split::kTest), 50u);
}

TEST_F(CliTest, TrainEvalExport) {
  const auto run_dir = dir_ / "run";
  auto r = run(train_args(run_dir.string()));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("epoch 1 "), std::string::npos);
  for (const char* f : {"config.txt", "metrics.jsonl", "timing.txt", "last.ckpt", "best.ckpt"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;

  auto again = run(train_args(run_dir.string()));
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.out.find("--force"), std::string::npos);
  EXPECT_EQ(run(train_args(run_dir.string()) + " --force").code, 0);

  const auto csv = dir_ / "confusion.csv";
  auto ev = run("eval --manifest " + manifest_ + " --checkpoint " + (run_dir / "best.ckpt").string() +
                " --split test --output " + csv.string());
  ASSERT_EQ(ev.code, 0) << ev.out;
  double acc = -1;
  std::size_t n = 0;
  ASSERT_EQ(std::sscanf(ev.out.c_str(), "accuracy %lf (%zu", &acc, &n), 2) << ev.out;
  EXPECT_EQ(n, 50u);
  std::size_t diag = 0, total = 0, row = 0;
  for (const auto& line : cosmix::split(cosmix::testing::slurp(csv), '\n')) {
    if (line.empty()) continue;
    const auto cells = cosmix::split(line, ',');
    ASSERT_EQ(cells.size(), 10u);
    for (std::size_t c = 0; c < 10; ++c) {
      const auto v = std::stoul(cells[c]);
      total += v;
      if (c == row) diag += v;
    }
    ++row;
  }
  EXPECT_EQ(total, 50u);
  EXPECT_NEAR(acc, static_cast<double>(diag) / 50.0, 5e-5);

  const auto emb = dir_ / "emb.txt";
  auto ex = run("export-embeddings --manifest " + manifest_ + " --checkpoint " +
                (run_dir / "best.ckpt").string() + " --split validation --output " + emb.string());
  ASSERT_EQ(ex.code, 0) << ex.out;
  EXPECT_TRUE(fs::exists(emb));
}

TEST_F(CliTest, ResumeContinues) {
  const auto run_dir = dir_ / "run";
  ASSERT_EQ(run(train_args(run_dir.string())).code, 0);
  auto r = run(train_args(run_dir.string()) + " --resume --epochs 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("epoch 2 "), std::string::npos);
  EXPECT_EQ(r.out.find("epoch 1 "), std::string::npos);
}

TEST_F(CliTest, DivergenceIsNumericExit) {
  auto cfg = cosmix::train::RunConfig::load(config_);
  cfg.train.lr0 = 1e30;
  cfg.train.epochs = 2;
  cosmix::write_file_atomic(config_, cfg.to_text());
  auto r = run(train_args((dir_ / "run").string()));
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(CliTest, CheckpointMismatchIsRejected) {
  const auto run_dir = dir_ / "run";
  ASSERT_EQ(run(train_args(run_dir.string())).code, 0);
  cosmix::train::RunConfig other;
  const auto other_cfg = dir_ / "other.cfg";
  cosmix::write_file_atomic(other_cfg, other.to_text());
  auto r = run("eval --manifest " + manifest_ + " --checkpoint " + (run_dir / "best.ckpt").string() +
               " --config " + other_cfg.string());
  EXPECT_EQ(r.code, 2);
}

TEST(CliVerify, InjectedFaultIsNamed) {
  auto r = run("verify", "COSMIX_GRADIENT_FAULT=conv2d");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("verification FAILED"), std::string::npos);
  EXPECT_NE(r.out.find("conv2d"), std::string::npos);
}

}  // namespace
