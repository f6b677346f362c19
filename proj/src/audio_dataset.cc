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
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "cosmix/errors.h"
#include "cosmix/util.h"

namespace cosmix::audio {

KeywordLabel::KeywordLabel(int index) : index_(index) {
  if (index < 0 || index >= kNumKeywords) {
    throw InvalidArgument("keyword index out of range: " + std::to_string(index));
  }
}

std::optional<KeywordLabel> KeywordLabel::TryFromName(std::string_view name) {
  for (int k = 0; k < kNumKeywords; ++k) {
    if (kKeywords[static_cast<std::size_t>(k)] == name) return KeywordLabel(k);
  }
  return std::nullopt;
}

KeywordLabel KeywordLabel::FromName(std::string_view name) {
  auto label = TryFromName(name);
  if (!label) throw InvalidArgument("unknown keyword: " + std::string(name));
  return *label;
}

std::array<double, kNumKeywords> KeywordLabel::one_hot() const {
  std::array<double, kNumKeywords> v{};
  v[static_cast<std::size_t>(index_)] = 1.0;
  return v;
}

ClipPathInfo parse_clip_path(std::string_view path) {
  std::filesystem::path p{std::string(path)};
  std::string word = p.parent_path().filename().string();
  std::string stem = p.stem().string();
  auto pos = stem.find("_nohash_");
  if (word.empty() || pos == std::string::npos || pos == 0) {
    throw InvalidInput("path does not follow <word>/<speaker>_nohash_<n>.wav: " +
                       std::string(path));
  }
  return {word, stem.substr(0, pos)};
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

std::vector<std::int16_t> read_pcm16(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError&) {
    throw FormatError("cannot read wav file: " + path.string());
  }
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path.string());
  }

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    std::uint32_t chunk_size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > size) {
        throw FormatError("truncated fmt chunk: " + path.string());
      }
      std::uint16_t format = read_u16(data + body);
      std::uint16_t channels = read_u16(data + body + 2);
      std::uint32_t rate = read_u32(data + body + 4);
      std::uint16_t bits = read_u16(data + body + 14);
      if (format != 1) throw UnsupportedFormatError("non-PCM wav: " + path.string());
      if (channels != 1) {
        throw UnsupportedFormatError("expected mono, got " + std::to_string(channels) +
                                     " channels: " + path.string());
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw UnsupportedFormatError("expected 16000 Hz, got " + std::to_string(rate) + ": " +
                                     path.string());
      }
      if (bits != 16) {
        throw UnsupportedFormatError("expected 16-bit samples, got " + std::to_string(bits) +
                                     ": " + path.string());
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk: " + path.string());
      if (body + chunk_size > size || chunk_size % 2 != 0) {
        throw FormatError("truncated data chunk: " + path.string());
      }
      std::vector<std::int16_t> samples(chunk_size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<std::int16_t>(read_u16(data + body + 2 * i));
      }
      return samples;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw FormatError("missing fmt or data chunk: " + path.string());
}

WavClip load_wav(const std::filesystem::path& path) {
  ClipPathInfo info = parse_clip_path(path.generic_string());
  auto label = KeywordLabel::TryFromName(info.word);
  if (!label) throw InvalidInput("not a keyword directory: " + info.word);
  std::vector<std::int16_t> pcm = read_pcm16(path);
  WavClip clip;
  clip.samples.resize(pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) clip.samples[i] = pcm[i] / 32768.0;
  clip.sample_rate = kSampleRate;
  clip.label = *label;
  clip.speaker_id = info.speaker_id;
  clip.source_path = path.string();
  return clip;
}

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
               int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (std::int16_t s : samples) put_u16(out, static_cast<std::uint16_t>(s));
  write_file_atomic(path, out);
}

std::vector<std::int16_t> quantize_pcm16(std::span<const double> samples) {
  std::vector<std::int16_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double v = std::round(samples[i] * 32768.0);
    out[i] = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
  }
  return out;
}

std::vector<double> pad_or_trim(std::span<const double> samples, std::size_t target) {
  if (samples.empty()) throw InvalidInput("pad_or_trim: empty clip");
  std::vector<double> out(target, 0.0);
  std::copy_n(samples.begin(), std::min(target, samples.size()), out.begin());
  return out;
}

WavClip pad_or_trim(const WavClip& clip, std::size_t target) {
  WavClip out = clip;
  out.samples = pad_or_trim(clip.samples, target);
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw InvalidArgument("unknown split: " + std::string(text));
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [split](const ManifestEntry& e) { return e.split == split; }));
}

std::array<std::size_t, kNumKeywords> DatasetManifest::per_keyword_count(Split split) const {
  std::array<std::size_t, kNumKeywords> counts{};
  for (const auto& e : entries) {
    if (e.split == split) ++counts[static_cast<std::size_t>(e.label.index())];
  }
  return counts;
}

namespace {

std::set<std::string> read_list(const std::filesystem::path& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot read list file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) out.emplace(t);
  }
  return out;
}

bool is_wav(const std::filesystem::path& p) { return p.extension() == ".wav"; }

}  // namespace

DatasetManifest build_manifest(const std::filesystem::path& root,
                               const std::filesystem::path& validation_list,
                               const std::filesystem::path& testing_list) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DatasetError("dataset root is not a directory: " + root.string());
  const fs::path abs_root = fs::absolute(root).lexically_normal();

  const std::set<std::string> validation = read_list(validation_list);
  const std::set<std::string> testing = read_list(testing_list);
  for (const auto& p : validation) {
    if (testing.count(p)) throw ManifestError("path listed in both validation and test: " + p);
  }

  DatasetManifest manifest;
  std::vector<std::string> relative;
  for (const auto& dir : fs::directory_iterator(abs_root)) {
    if (!dir.is_directory()) continue;
    const std::string word = dir.path().filename().string();
    const bool keyword = KeywordLabel::TryFromName(word).has_value();
    for (const auto& file : fs::directory_iterator(dir.path())) {
      if (!file.is_regular_file() || !is_wav(file.path())) continue;
      if (!keyword) {
        ++manifest.skipped_files;
        continue;
      }
      relative.push_back(word + "/" + file.path().filename().string());
    }
  }
  std::sort(relative.begin(), relative.end());

  auto check_listed = [&](const std::set<std::string>& listed) {
    for (const auto& p : listed) {
      auto slash = p.find('/');
      if (slash == std::string::npos) continue;
      if (!KeywordLabel::TryFromName(p.substr(0, slash))) continue;
      if (!fs::is_regular_file(abs_root / p)) {
        throw ManifestError("listed file missing on disk: " + p);
      }
    }
  };
  check_listed(validation);
  check_listed(testing);

  manifest.entries.reserve(relative.size());
  for (const auto& rel : relative) {
    ClipPathInfo info = parse_clip_path(rel);
    ManifestEntry e;
    e.path = (abs_root / rel).string();
    e.label = KeywordLabel::FromName(info.word);
    e.speaker_id = info.speaker_id;
    e.split = validation.count(rel) ? Split::kValidation
              : testing.count(rel)  ? Split::kTest
                                    : Split::kTrain;
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

DatasetManifest trim_by_speaker(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw InvalidArgument("trim fraction must lie in (0, 1]: " + format_double(fraction));
  }
  std::vector<bool> keep(manifest.entries.size(), true);
  for (int k = 0; k < kNumKeywords; ++k) {
    // Speaker -> entry indices; std::map gives a canonical pre-shuffle order.
    std::map<std::string, std::vector<std::size_t>> by_speaker;
    std::size_t total = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      const auto& e = manifest.entries[i];
      if (e.split != Split::kTrain || e.label.index() != k) continue;
      by_speaker[e.speaker_id].push_back(i);
      ++total;
    }
    if (total == 0) {
      throw DatasetError("keyword '" + std::string(kKeywords[static_cast<std::size_t>(k)]) +
                         "' has no train utterances");
    }
    std::vector<std::string> speakers;
    for (const auto& [spk, _] : by_speaker) speakers.push_back(spk);
    Rng rng = counter_rng(seed, {static_cast<std::uint64_t>(k)});
    std::shuffle(speakers.begin(), speakers.end(), rng);

    const auto quota = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(total) - 1e-9));
    std::size_t retained = 0;
    for (const auto& spk : speakers) {
      const auto& idx = by_speaker[spk];
      if (retained >= quota) {
        for (std::size_t i : idx) keep[i] = false;
      } else {
        retained += idx.size();
      }
    }
  }
  DatasetManifest out;
  out.trim_fraction = fraction;
  out.seed = seed;
  out.skipped_files = manifest.skipped_files;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (keep[i]) out.entries.push_back(manifest.entries[i]);
  }
  return out;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    out += e.path;
    out += '\t';
    out += std::to_string(e.label.index());
    out += '\t';
    out += e.speaker_id;
    out += '\t';
    out += to_string(e.split);
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest manifest;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    if (raw.empty()) continue;
    auto fields = split(raw, '\t');
    if (fields.size() != 4) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": expected 4 fields");
    }
    try {
      ManifestEntry e;
      e.path = fields[0];
      e.label = KeywordLabel(std::stoi(fields[1]));
      e.speaker_id = fields[2];
      e.split = split_from_string(fields[3]);
      manifest.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_file_atomic(path, serialize_manifest(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ManifestError(e.what());
  }
  return parse_manifest(text);
}

namespace {

// Raised-cosine bump, zero outside [onset, onset + duration].
double envelope(double t, double onset, double duration) {
  if (t < onset || t > onset + duration) return 0.0;
  double x = (t - onset) / duration;
  return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * x);
}

}  // namespace

SyntheticCorpus synth_dataset(std::size_t n_per_class, double noise_level, std::uint64_t seed) {
  if (n_per_class < 1) throw InvalidArgument("synth_dataset: n_per_class must be >= 1");
  if (noise_level < 0) throw InvalidArgument("synth_dataset: noise_level must be >= 0");
  constexpr std::size_t kClipsPerSpeaker = 5;
  const std::size_t n_speakers = (n_per_class + kClipsPerSpeaker - 1) / kClipsPerSpeaker;
  const auto n_val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n_speakers)));
  const auto n_train_raw =
      static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(n_speakers)));
  const std::size_t n_train = std::max<std::size_t>(1, std::min(n_train_raw, n_speakers));
  const std::size_t n_val_eff = std::min(n_val, n_speakers - n_train);

  struct Item {
    std::string rel;
    WavClip clip;
    Split split;
  };
  std::vector<Item> items;
  items.reserve(n_per_class * kNumKeywords);

  for (int k = 0; k < kNumKeywords; ++k) {
    const double f1 = 300.0 * (k + 1);
    const double f2 = 450.0 * (k + 1);
    const double base_onset = 0.15 + 0.02 * k;
    const double base_duration = 0.35 + 0.03 * k;
    for (std::size_t n = 0; n < n_per_class; ++n) {
      const std::size_t spk = n / kClipsPerSpeaker;
      char spk_name[32];
      std::snprintf(spk_name, sizeof(spk_name), "syn%02ds%03zu", k, spk);
      Rng rng = counter_rng(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n)});
      std::uniform_real_distribution<double> jitter(-1.0, 1.0);
      const double onset = base_onset + 0.05 * jitter(rng);
      const double duration = base_duration * (1.0 + 0.1 * jitter(rng));
      std::normal_distribution<double> noise(0.0, 1.0);

      std::vector<double> wave(kClipSamples);
      for (std::size_t t = 0; t < kClipSamples; ++t) {
        const double sec = static_cast<double>(t) / kSampleRate;
        const double env = envelope(sec, onset, duration);
        double v = 0.3 * env *
                   (std::sin(2.0 * std::numbers::pi * f1 * sec) +
                    std::sin(2.0 * std::numbers::pi * f2 * sec));
        if (noise_level > 0) v += noise_level * noise(rng);
        wave[t] = std::clamp(v, -1.0, 32767.0 / 32768.0);
      }
      auto pcm = quantize_pcm16(wave);
      for (std::size_t t = 0; t < kClipSamples; ++t) wave[t] = pcm[t] / 32768.0;

      Item item;
      item.rel = std::string(kKeywords[static_cast<std::size_t>(k)]) + "/" + spk_name +
                 "_nohash_" + std::to_string(n % kClipsPerSpeaker) + ".wav";
      item.split = spk < n_train                ? Split::kTrain
                   : spk < n_train + n_val_eff ? Split::kValidation
                                               : Split::kTest;
      item.clip.samples = std::move(wave);
      item.clip.label = KeywordLabel(k);
      item.clip.speaker_id = spk_name;
      item.clip.source_path = item.rel;
      items.push_back(std::move(item));
    }
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.rel < b.rel; });

  SyntheticCorpus corpus;
  corpus.manifest.seed = seed;
  for (auto& item : items) {
    corpus.manifest.entries.push_back(
        ManifestEntry{item.rel, item.clip.label, item.clip.speaker_id, item.split});
    corpus.clips.push_back(std::move(item.clip));
  }
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::string validation, testing;
  for (std::size_t i = 0; i < corpus.manifest.entries.size(); ++i) {
    const auto& e = corpus.manifest.entries[i];
    const fs::path target = root / e.path;
    fs::create_directories(target.parent_path());
    write_wav(target, quantize_pcm16(corpus.clips[i].samples));
    if (e.split == Split::kValidation) validation += e.path + "\n";
    if (e.split == Split::kTest) testing += e.path + "\n";
  }
  write_file_atomic(root / "validation_list.txt", validation);
  write_file_atomic(root / "testing_list.txt", testing);
}

}  // namespace cosmix::audio
