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

#ifndef COSMIX_AUDIO_DATASET_H_
#define COSMIX_AUDIO_DATASET_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cosmix::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;
inline constexpr int kNumKeywords = 10;
inline constexpr std::array<std::string_view, kNumKeywords> kKeywords = {
    "up", "down", "left", "right", "yes", "no", "on", "off", "go", "stop"};

class KeywordLabel {
 public:
  KeywordLabel() = default;
  // Throws InvalidArgument outside 0..9.
  explicit KeywordLabel(int index);

  static KeywordLabel FromName(std::string_view name);
  static std::optional<KeywordLabel> TryFromName(std::string_view name);

  int index() const { return index_; }
  std::string_view name() const { return kKeywords[static_cast<std::size_t>(index_)]; }
  std::array<double, kNumKeywords> one_hot() const;

  friend bool operator==(const KeywordLabel&, const KeywordLabel&) = default;

 private:
  int index_ = 0;
};

struct WavClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  KeywordLabel label;
  std::string speaker_id;
  std::string source_path;
};

// Speaker and keyword parsed from `<word>/<speaker_id>_nohash_<n>.wav`.
struct ClipPathInfo {
  std::string word;
  std::string speaker_id;
};
ClipPathInfo parse_clip_path(std::string_view path);

// 16-bit mono 16 kHz PCM only; anything else is rejected rather than
// converted.
WavClip load_wav(const std::filesystem::path& path);
std::vector<std::int16_t> read_pcm16(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
               int sample_rate = kSampleRate);

// Inverse of the 1/32768 load scaling, saturating at the int16 range.
std::vector<std::int16_t> quantize_pcm16(std::span<const double> samples);

std::vector<double> pad_or_trim(std::span<const double> samples,
                                std::size_t target = kClipSamples);
WavClip pad_or_trim(const WavClip& clip, std::size_t target = kClipSamples);

enum class Split { kTrain, kValidation, kTest };
std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct ManifestEntry {
  std::string path;
  KeywordLabel label;
  std::string speaker_id;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  double trim_fraction = 1.0;
  std::uint64_t seed = 0;
  // Files under directories that are not one of the ten keywords.
  std::size_t skipped_files = 0;

  std::vector<std::size_t> indices(Split split) const;
  std::size_t count(Split split) const;
  std::array<std::size_t, kNumKeywords> per_keyword_count(Split split) const;
};

DatasetManifest build_manifest(const std::filesystem::path& root,
                               const std::filesystem::path& validation_list,
                               const std::filesystem::path& testing_list);

// Per keyword: seeded shuffle of speakers, whole speakers admitted until the
// retained train count first reaches ceil(fraction * count). Validation and
// test entries pass through untouched.
DatasetManifest trim_by_speaker(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed);

// `path<TAB>label_index<TAB>speaker_id<TAB>split` per line, LF endings.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SyntheticCorpus {
  DatasetManifest manifest;
  // Aligned with manifest.entries; already on the int16 grid so a disk
  // round trip is lossless.
  std::vector<WavClip> clips;
};

// Class k is a harmonic pair at (k+1)*{300, 450} Hz under a class-specific
// envelope, plus Gaussian noise. Five clips per synthetic speaker; speakers
// of each class are split 60/20/20 into train/validation/test.
SyntheticCorpus synth_dataset(std::size_t n_per_class, double noise_level, std::uint64_t seed);

// Lays the corpus out like Speech Commands: `<word>/<file>.wav`,
// validation_list.txt and testing_list.txt.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& root);

}  // namespace cosmix::audio

#endif  // COSMIX_AUDIO_DATASET_H_
