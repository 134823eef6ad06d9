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

#ifndef BETAGATE_TRAINER_HPP_
#define BETAGATE_TRAINER_HPP_

#include <string>
#include <vector>

#include "betagate/config.hpp"

namespace betagate {

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_metric = 0.0;  // accuracy (classify/mnist) or frame NLL (music)
  double kl = 0.0;            // mean per-batch KL term (0 for non-prior cells)
};

struct TrainOutcome {
  std::vector<MetricsRow> rows;
  bool higher_is_better = true;
  double best_valid = 0.0;
  int best_epoch = 0;
  std::string best_checkpoint;  // best-by-validation
  std::string last_checkpoint;
  std::string metrics_path;     // JSON-lines, deterministic content
  std::string meta_path;        // resolved config + seeds + code version
};

// Runs the configured training job. Writes, under cfg.out_dir:
//   metrics.jsonl   one JSON object per epoch (deterministic)
//   run_log.jsonl   per-epoch wall-clock timings (not compared across runs)
//   run_meta.json   the resolved config; re-running from it reproduces
//                   metrics.jsonl byte for byte
//   best.ckpt.json / last.ckpt.json
// A non-finite loss aborts with NumericError; checkpoints already on disk
// are left in place.
TrainOutcome train(const RunConfig& cfg);

struct EvalOutcome {
  double metric = 0.0;  // mean over passes
  double stddev = 0.0;  // 0 in mean mode
  int passes = 1;
  bool higher_is_better = true;
};

// Evaluates a checkpoint on the task's test split. Mean mode is one
// deterministic pass; sample mode reports mean and standard deviation over
// 10 stochastic passes.
EvalOutcome evaluate(const RunConfig& cfg, const std::string& checkpoint);

// Dispatches one diagnostic, writing CSV files into out_dir:
//   histogram    -> histogram.csv       (needs a checkpoint)
//   correlation  -> correlation.csv     (needs a Beta-variant checkpoint)
//   gradflow     -> gradflow.csv        (needs a checkpoint)
//   proposition  -> proposition.csv     (model-free)
//   synthetic    -> synthetic_demo.csv  (trains its own small model)
void diagnose(const RunConfig& cfg, const std::string& checkpoint,
              const std::string& which, const std::string& out_dir);

}  // namespace betagate

#endif  // BETAGATE_TRAINER_HPP_
