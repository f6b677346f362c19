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

#include <bit>
#include <cstring>

#include "cosmix/errors.h"
#include "cosmix/model.h"
#include "cosmix/util.h"

namespace cosmix::model {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::string_view kOptimizerPrefix = "optimizer/";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  void record(const std::string& name, const ad::Parameter<float>& p) {
    str(name);
    u32(static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) u32(static_cast<std::uint32_t>(d));
    for (float v : p.value) u32(std::bit_cast<std::uint32_t>(v));
  }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::map<std::string, std::string> parse_entries(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!entries.emplace(key, value).second) throw ConfigError("duplicate key: " + key);
  }
  return entries;
}

std::string format_entries(const std::map<std::string, std::string>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

ModelConfig Checkpoint::model_config() const {
  return ModelConfig::from_entries(parse_entries(config_text));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.raw("CMX1");
  w.u32(kVersion);
  w.str(checkpoint.config_text);
  w.u32(checkpoint.epoch);
  w.str(checkpoint.rng_state);
  w.str(checkpoint.metrics_tail);
  w.u64(checkpoint.optimizer_step);
  w.u32(static_cast<std::uint32_t>(checkpoint.params.size() + checkpoint.optimizer_state.size()));
  for (const auto& p : checkpoint.params) w.record(p.name, p);
  for (const auto& p : checkpoint.optimizer_state) w.record(std::string(kOptimizerPrefix) + p.name, p);
  write_file_atomic(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  if (bytes.size() < 8 || bytes.compare(0, 4, "CMX1") != 0) {
    throw CheckpointError("bad checkpoint magic: " + path.string());
  }
  Reader r(std::string_view(bytes).substr(4));
  if (const std::uint32_t version = r.u32(); version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_text = r.str();
  ck.epoch = r.u32();
  ck.rng_state = r.str();
  ck.metrics_tail = r.str();
  ck.optimizer_step = r.u64();
  const std::uint32_t n_records = r.u32();
  for (std::uint32_t i = 0; i < n_records; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("implausible tensor rank in record " + name);
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    const std::size_t n = ad::numel(shape);
    r.need(4 * n);
    const bool optimizer = name.starts_with(kOptimizerPrefix);
    if (optimizer) name.erase(0, kOptimizerPrefix.size());
    auto& target = optimizer ? ck.optimizer_state : ck.params;
    if (target.contains(name)) throw CheckpointError("duplicate record " + name);
    auto& p = target.add(name, shape);
    for (std::size_t k = 0; k < n; ++k) p.value[k] = std::bit_cast<float>(r.u32());
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint records");
  return ck;
}

}  // namespace cosmix::model
