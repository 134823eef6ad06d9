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

#ifndef BETAGATE_CONFIG_HPP_
#define BETAGATE_CONFIG_HPP_

#include <cstdint>
#include <string>

namespace betagate {

inline constexpr const char* kCodeVersion = "betagate-0.1.0";

// Full run configuration. Precedence: built-in defaults, then the JSON
// config file, then command-line flags; the BETAGATE_OUT environment
// variable overrides the output directory last.
struct RunConfig {
  std::string variant = "lstm";
  std::string task = "synthetic";  // classify | music | mnist | synthetic

  // dataset paths (task dependent)
  std::string train_path, valid_path, test_path;
  std::string mnist_images, mnist_labels;
  std::string mnist_test_images, mnist_test_labels;
  std::string mnist_variant = "smnist";  // smnist | pmnist
  std::string feature_path;  // per-token feature vectors for the kernel prior

  std::int64_t hidden = 32;
  int layers = 1;
  std::int64_t embedding_dim = 64;
  int gate_depth = 1;

  std::int64_t batch = 32;
  int epochs = 10;
  double lr = 1e-3;
  double clip_norm = 5.0;

  double lambda = 0.01;  // KL weight (bblstm5gp)
  double tau = 0.5;      // g2lstm temperature

  // Initial forget-gate bias (sigmoid variants) and its Beta-variant
  // analogue (added to the f-numerator shape networks' final bias). Long
  // sequences need larger values so the initial memory spans the sequence.
  double forget_bias = 1.0;
  double beta_forget_bias = 0.0;

  std::string prior_mode = "constant";  // constant | feature-kernel
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  double kernel_length = 1.0;
  double kernel_scale = 1.0;

  std::uint64_t seed_init = 1;
  std::uint64_t seed_shuffle = 2;
  std::uint64_t seed_sampler = 3;
  std::uint64_t seed_permutation = 92916;

  std::string eval_mode = "mean";  // mean | sample
  std::string out_dir = "out";

  // synthetic-task shape
  int synth_sequences = 512;
  int synth_len = 12;
  int synth_values = 4;

  // desk-scale caps (0 = unlimited)
  int max_train = 0, max_valid = 0, max_test = 0;
};

// Parses the JSON config file into `config` (unknown keys are an error).
void apply_config_file(RunConfig& config, const std::string& path);

// Serializes the resolved config; parseable by apply_config_file.
std::string config_to_json(const RunConfig& config);

// Cross-field validation; throws UsageError with the offending field.
void validate_config(const RunConfig& config);

}  // namespace betagate

#endif  // BETAGATE_CONFIG_HPP_
