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


#include "cosmix/audio_dataset.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "cosmix/errors.h"
#include "test_support.h"

namespace cosmix::audio {
namespace {

using cosmix::testing::raw_wav;
using cosmix::testing::TempDir;
using cosmix::testing::write_bytes;

TEST(KeywordLabel, NameIndexBijection) {
  for (int k = 0; k < kNumKeywords; ++k) {
    KeywordLabel l(k);
    EXPECT_EQ(KeywordLabel::FromName(l.name()).index(), k);
    auto oh = l.one_hot();
    double s = 0;
    int nonzero = 0;
    for (double v : oh) {
      s += v;
      nonzero += v != 0.0;
    }
    EXPECT_EQ(s, 1.0);
    EXPECT_EQ(nonzero, 1);
    EXPECT_EQ(oh[static_cast<std::size_t>(k)], 1.0);
  }
  EXPECT_EQ(KeywordLabel::FromName("stop").index(), 9);
  EXPECT_THROW(KeywordLabel(10), InvalidArgument);
  EXPECT_THROW(KeywordLabel::FromName("marvin"), InvalidArgument);
}

TEST(ParseClipPath, SpeakerAndWord) {
  auto info = parse_clip_path("yes/abc123_nohash_0.wav");
  EXPECT_EQ(info.word, "yes");
  EXPECT_EQ(info.speaker_id, "abc123");
  EXPECT_EQ(parse_clip_path("/data/sc/go/ffd2ba2f_nohash_4.wav").word, "go");
  EXPECT_THROW(parse_clip_path("yes/abc123.wav"), InvalidInput);
}

TEST(LoadWav, Silence) {
  TempDir dir;
  write_bytes(dir / "yes/abc123_nohash_0.wav", raw_wav(std::vector<std::int16_t>(16000, 0)));
  WavClip clip = load_wav(dir / "yes/abc123_nohash_0.wav");
  ASSERT_EQ(clip.samples.size(), 16000u);
  EXPECT_TRUE(std::all_of(clip.samples.begin(), clip.samples.end(), [](double v) { return v == 0; }));
  EXPECT_EQ(clip.label.name(), "yes");
  EXPECT_EQ(clip.speaker_id, "abc123");
  EXPECT_EQ(clip.sample_rate, 16000);
}

TEST(LoadWav, FullScale) {
  TempDir dir;
  write_bytes(dir / "no/s1_nohash_0.wav", raw_wav(std::vector<std::int16_t>(16000, 32767)));
  WavClip clip = load_wav(dir / "no/s1_nohash_0.wav");
  for (double v : clip.samples) EXPECT_DOUBLE_EQ(v, 32767.0 / 32768.0);
}

TEST(LoadWav, RejectsUnsupportedVariants) {
  TempDir dir;
  std::vector<std::int16_t> pcm(100, 1);
  write_bytes(dir / "up/a_nohash_0.wav", raw_wav(pcm, 8000));
  write_bytes(dir / "up/b_nohash_0.wav", raw_wav(pcm, 16000, 2));
  write_bytes(dir / "up/c_nohash_0.wav", raw_wav(pcm, 16000, 1, 8));
  write_bytes(dir / "up/d_nohash_0.wav", raw_wav(pcm, 16000, 1, 16, 3));
  EXPECT_THROW(load_wav(dir / "up/a_nohash_0.wav"), UnsupportedFormatError);
  EXPECT_THROW(load_wav(dir / "up/b_nohash_0.wav"), UnsupportedFormatError);
  EXPECT_THROW(load_wav(dir / "up/c_nohash_0.wav"), UnsupportedFormatError);
  EXPECT_THROW(load_wav(dir / "up/d_nohash_0.wav"), UnsupportedFormatError);
}

TEST(LoadWav, RejectsMalformedHeaders) {
  TempDir dir;
  std::string good = raw_wav(std::vector<std::int16_t>(100, 1));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(dir / "up/a_nohash_0.wav", bad_magic);
  write_bytes(dir / "up/b_nohash_0.wav", good.substr(0, 30));
  write_bytes(dir / "up/c_nohash_0.wav", good.substr(0, good.size() - 10));
  EXPECT_THROW(load_wav(dir / "up/a_nohash_0.wav"), FormatError);
  EXPECT_THROW(load_wav(dir / "up/b_nohash_0.wav"), FormatError);
  EXPECT_THROW(load_wav(dir / "up/c_nohash_0.wav"), FormatError);
  EXPECT_THROW(load_wav(dir / "up/missing_nohash_0.wav"), FormatError);
}

TEST(WavRoundTrip, BitExactAgainstHandWrittenFile) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(-32768, 32767);
  std::vector<std::int16_t> pcm(12345);
  for (auto& s : pcm) s = static_cast<std::int16_t>(d(rng));
  std::filesystem::create_directories(dir / "left");
  write_wav(dir / "left/x_nohash_0.wav", pcm);
  EXPECT_EQ(cosmix::testing::slurp(dir / "left/x_nohash_0.wav"), raw_wav(pcm));
  EXPECT_EQ(read_pcm16(dir / "left/x_nohash_0.wav"), pcm);
  WavClip clip = load_wav(dir / "left/x_nohash_0.wav");
  EXPECT_EQ(quantize_pcm16(clip.samples), pcm);
}

TEST(PadOrTrim, Rules) {
  auto w = cosmix::testing::random_wave(1, 16000);
  EXPECT_EQ(pad_or_trim(w), w);
  auto shorter = cosmix::testing::random_wave(2, 12000);
  auto padded = pad_or_trim(shorter);
  ASSERT_EQ(padded.size(), 16000u);
  EXPECT_TRUE(std::equal(shorter.begin(), shorter.end(), padded.begin()));
  EXPECT_TRUE(std::all_of(padded.begin() + 12000, padded.end(), [](double v) { return v == 0; }));
  auto longer = cosmix::testing::random_wave(3, 17000);
  auto trimmed = pad_or_trim(longer);
  ASSERT_EQ(trimmed.size(), 16000u);
  EXPECT_TRUE(std::equal(trimmed.begin(), trimmed.end(), longer.begin()));
  EXPECT_THROW(pad_or_trim(std::vector<double>{}), InvalidInput);
}

// Fixture directory with `per_word` files per keyword from `speakers`
// speakers, plus one non-keyword directory.
struct Fixture {
  TempDir dir;
  std::vector<std::string> all;

  Fixture(int per_word, int speakers) {
    for (auto word : kKeywords) {
      for (int n = 0; n < per_word; ++n) {
        std::string rel = std::string(word) + "/spk" + std::to_string(n % speakers) + "_nohash_" +
                          std::to_string(n / speakers) + ".wav";
        write_bytes(dir / rel, raw_wav(std::vector<std::int16_t>(160, static_cast<std::int16_t>(n))));
        all.push_back(rel);
      }
    }
    write_bytes(dir / "marvin/q_nohash_0.wav", raw_wav(std::vector<std::int16_t>(160, 0)));
    std::sort(all.begin(), all.end());
  }
  void lists(const std::string& val, const std::string& test) {
    write_bytes(dir / "validation_list.txt", val);
    write_bytes(dir / "testing_list.txt", test);
  }
  DatasetManifest build() {
    return build_manifest(dir.path(), dir / "validation_list.txt", dir / "testing_list.txt");
  }
};

TEST(BuildManifest, EmptyListsTagEverythingTrain) {
  Fixture f(4, 2);
  f.lists("", "");
  auto m = f.build();
  EXPECT_EQ(m.entries.size(), 40u);
  EXPECT_EQ(m.count(Split::kTrain), 40u);
  EXPECT_EQ(m.skipped_files, 1u);
  std::vector<std::string> paths;
  for (const auto& e : m.entries) paths.push_back(e.path);
  std::vector<std::string> expected;
  for (const auto& rel : f.all) expected.push_back((f.dir / rel).string());
  EXPECT_EQ(paths, expected);
}

TEST(BuildManifest, CountsFollowLists) {
  Fixture f(6, 3);
  std::string val, test;
  int v = 0, t = 0;
  for (std::size_t i = 0; i < f.all.size(); ++i) {
    if (i % 7 == 0) {
      val += f.all[i] + "\n";
      ++v;
    } else if (i % 7 == 1) {
      test += f.all[i] + "\n";
      ++t;
    }
  }
  f.lists(val, test);
  auto m = f.build();
  EXPECT_EQ(m.count(Split::kTrain), f.all.size() - v - t);
  EXPECT_EQ(m.count(Split::kValidation), static_cast<std::size_t>(v));
  EXPECT_EQ(m.count(Split::kTest), static_cast<std::size_t>(t));
  EXPECT_EQ(m.count(Split::kTrain) + m.count(Split::kValidation) + m.count(Split::kTest),
            m.entries.size());
}

TEST(BuildManifest, Errors) {
  Fixture f(2, 1);
  f.lists(f.all[0] + "\n", f.all[0] + "\n");
  EXPECT_THROW(f.build(), ManifestError);
  f.lists("yes/ghost_nohash_0.wav\n", "");
  try {
    f.build();
    FAIL() << "expected ManifestError";
  } catch (const ManifestError& e) {
    EXPECT_NE(std::string(e.what()).find("yes/ghost_nohash_0.wav"), std::string::npos);
  }
  EXPECT_THROW(build_manifest(f.dir / "nope", f.dir / "validation_list.txt",
                              f.dir / "testing_list.txt"),
               DatasetError);
}

// Manifest with `speakers` speakers per keyword, speaker s owning s % 4 + 1
// train utterances, plus some held-out entries.
DatasetManifest synthetic_manifest(int speakers) {
  DatasetManifest m;
  for (int k = 0; k < kNumKeywords; ++k) {
    std::string word(kKeywords[static_cast<std::size_t>(k)]);
    for (int s = 0; s < speakers; ++s) {
      for (int u = 0; u < s % 4 + 1; ++u) {
        std::string spk = "s" + std::to_string(k) + "_" + std::to_string(s);
        m.entries.push_back({word + "/" + spk + "_nohash_" + std::to_string(u) + ".wav",
                             KeywordLabel(k), spk, Split::kTrain});
      }
    }
    m.entries.push_back({word + "/v_nohash_0.wav", KeywordLabel(k), "v", Split::kValidation});
    m.entries.push_back({word + "/t_nohash_0.wav", KeywordLabel(k), "t", Split::kTest});
  }
  return m;
}

std::map<std::pair<int, std::string>, int> speaker_counts(const DatasetManifest& m) {
  std::map<std::pair<int, std::string>, int> out;
  for (const auto& e : m.entries)
    if (e.split == Split::kTrain) ++out[{e.label.index(), e.speaker_id}];
  return out;
}

TEST(TrimBySpeaker, FullFractionIsIdentity) {
  auto m = synthetic_manifest(12);
  auto t = trim_by_speaker(m, 1.0, 5);
  EXPECT_EQ(t.entries, m.entries);
}

TEST(TrimBySpeaker, QuotaIsMinimalSpeakerPrefix) {
  auto m = synthetic_manifest(40);
  for (double fraction : {0.05, 0.2, 0.5}) {
    auto t = trim_by_speaker(m, fraction, 11);
    auto before = m.per_keyword_count(Split::kTrain);
    auto after = t.per_keyword_count(Split::kTrain);
    auto spk = speaker_counts(t);
    auto orig = speaker_counts(m);
    for (int k = 0; k < kNumKeywords; ++k) {
      const auto quota = static_cast<std::size_t>(std::ceil(fraction * before[k]));
      EXPECT_GE(after[k], quota);
      // Whole speakers only. The last admitted speaker owns at most four
      // utterances and was admitted below the quota.
      for (const auto& [key, n] : spk) {
        if (key.first == k) {
          EXPECT_EQ(n, orig.at(key));
        }
      }
      EXPECT_LT(after[k], quota + 4);
    }
    EXPECT_EQ(t.count(Split::kValidation), m.count(Split::kValidation));
    EXPECT_EQ(t.count(Split::kTest), m.count(Split::kTest));
  }
}

TEST(TrimBySpeaker, SubsetIdempotentMonotoneDeterministic) {
  auto m = synthetic_manifest(30);
  std::array<std::size_t, kNumKeywords> prev{};
  for (double fraction : {0.05, 0.1, 0.25, 0.5, 0.75, 1.0}) {
    auto t = trim_by_speaker(m, fraction, 99);
    auto again = trim_by_speaker(m, fraction, 99);
    EXPECT_EQ(serialize_manifest(t), serialize_manifest(again));
    EXPECT_EQ(trim_by_speaker(t, 1.0, 99).entries, t.entries);
    std::set<std::string> orig_paths;
    for (const auto& e : m.entries) orig_paths.insert(e.path);
    for (const auto& e : t.entries) EXPECT_TRUE(orig_paths.count(e.path));
    auto counts = t.per_keyword_count(Split::kTrain);
    for (int k = 0; k < kNumKeywords; ++k) EXPECT_GE(counts[k], prev[k]);
    prev = counts;
  }
}

TEST(TrimBySpeaker, Errors) {
  auto m = synthetic_manifest(5);
  EXPECT_THROW(trim_by_speaker(m, 0.0, 1), InvalidArgument);
  EXPECT_THROW(trim_by_speaker(m, 1.5, 1), InvalidArgument);
  DatasetManifest missing = m;
  std::erase_if(missing.entries, [](const ManifestEntry& e) {
    return e.label.index() == 3 && e.split == Split::kTrain;
  });
  EXPECT_THROW(trim_by_speaker(missing, 0.5, 1), DatasetError);
}

TEST(Manifest, SerializeRoundTrip) {
  auto m = trim_by_speaker(synthetic_manifest(9), 0.5, 2);
  std::string text = serialize_manifest(m);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  auto back = parse_manifest(text);
  EXPECT_EQ(back.entries, m.entries);
  EXPECT_EQ(serialize_manifest(back), text);
  TempDir dir;
  write_manifest(dir / "m.tsv", m);
  EXPECT_EQ(read_manifest(dir / "m.tsv").entries, m.entries);
  EXPECT_THROW(parse_manifest("a\tb\n"), ManifestError);
}

TEST(SynthDataset, CountsSplitsAndSeeding) {
  auto c = synth_dataset(20, 0.3, 1);
  ASSERT_EQ(c.manifest.entries.size(), 200u);
  ASSERT_EQ(c.clips.size(), 200u);
  for (int k = 0; k < kNumKeywords; ++k) {
    EXPECT_EQ(c.manifest.per_keyword_count(Split::kTrain)[k] +
                  c.manifest.per_keyword_count(Split::kValidation)[k] +
                  c.manifest.per_keyword_count(Split::kTest)[k],
              20u);
  }
  std::map<std::string, std::set<Split>> speaker_splits;
  for (std::size_t i = 0; i < c.clips.size(); ++i) {
    const auto& e = c.manifest.entries[i];
    speaker_splits[e.speaker_id].insert(e.split);
    EXPECT_EQ(c.clips[i].samples.size(), kClipSamples);
    EXPECT_EQ(c.clips[i].label, e.label);
    for (double v : c.clips[i].samples) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
  }
  for (const auto& [spk, splits] : speaker_splits) EXPECT_EQ(splits.size(), 1u) << spk;

  auto again = synth_dataset(20, 0.3, 1);
  auto other = synth_dataset(20, 0.3, 2);
  EXPECT_EQ(again.clips[17].samples, c.clips[17].samples);
  EXPECT_NE(other.clips[17].samples, c.clips[17].samples);
  EXPECT_EQ(other.manifest.entries, c.manifest.entries);
}

TEST(SynthDataset, CorpusOnDiskMatchesMemory) {
  TempDir dir;
  auto c = synth_dataset(5, 0.3, 4);
  write_corpus(c, dir.path());
  auto m = build_manifest(dir.path(), dir / "validation_list.txt", dir / "testing_list.txt");
  auto expected = c.manifest.entries;
  for (auto& e : expected) e.path = (dir / e.path).string();
  EXPECT_EQ(m.entries, expected);
  for (std::size_t i = 0; i < c.clips.size(); i += 7) {
    EXPECT_EQ(load_wav(m.entries[i].path).samples, c.clips[i].samples);
  }
}

}  // namespace
}  // namespace cosmix::audio
