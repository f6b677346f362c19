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

#ifndef COSMIX_VERIFY_H_
#define COSMIX_VERIFY_H_

#include <functional>
#include <string>
#include <vector>

namespace cosmix::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;  // the suite's measured worst case
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string detail;  // failing property or error message
};

struct Report {
  std::vector<SuiteResult> suites;
  bool passed() const;
  // One line per suite.
  std::string to_text() const;
};

// Names of every suite, in run order.
std::vector<std::string> suite_names();

// Gradient checks for each primitive and for the full loss on a tiny model,
// loss identities, Beta sampler moments, the DFT oracle and the fbank shape.
// Exceptions inside a suite mark that suite failed; the rest still run.
Report run_verification(const std::function<void(const SuiteResult&)>& on_suite = {});

}  // namespace cosmix::verify

#endif  // COSMIX_VERIFY_H_
