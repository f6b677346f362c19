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

#ifndef COSMIX_UTIL_H_
#define COSMIX_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cosmix {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Generator keyed by a seed and a tuple of counters, e.g. (seed, epoch,
// batch, row). Streams for distinct keys are independent of evaluation order.
Rng counter_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> counters);

// Writes to a sibling temp file and renames over `path`, so readers never
// observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// Shortest round-trip decimal form.
std::string format_double(double value);

}  // namespace cosmix

#endif  // COSMIX_UTIL_H_
