// Copyright 2026 The betagate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BETAGATE_SELFCHECK_HPP_
#define BETAGATE_SELFCHECK_HPP_

#include <string>
#include <vector>

namespace betagate {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=", ">=", "==" against the threshold
  bool pass = false;
};

// Test-harness fault injection knobs. The CLI never sets these; they let
// the test suite verify that a broken component actually fails the check.
struct SelfCheckOptions {
  bool fault_shift_gamma_mean = false;  // scales sampler output by 1.1
};

struct SelfCheckReport {
  std::vector<CheckResult> results;
  bool all_pass = false;
};

// Runs the full property suite: special-function identities, sampler
// statistics, pathwise-gradient agreement, tape gradient checks, KL oracle
// agreement, gate invariants and determinism. Every property always runs;
// failures are report content, not exceptions.
SelfCheckReport run_selfcheck(const SelfCheckOptions& opts = {});

std::string selfcheck_report_json(const SelfCheckReport& report);

}  // namespace betagate

#endif  // BETAGATE_SELFCHECK_HPP_
