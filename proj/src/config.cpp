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

#include "betagate/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "betagate/cells.hpp"
#include "betagate/error.hpp"

namespace betagate {

namespace {

template <typename T>
void maybe(const nlohmann::json& doc, const char* key, T& field,
           std::set<std::string>& seen) {
  if (doc.contains(key)) {
    field = doc.at(key).get<T>();
    seen.insert(key);
  }
}

}  // namespace

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config: malformed JSON in " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw DataError("config: expected a JSON object");

  std::set<std::string> seen;
  maybe(doc, "variant", c.variant, seen);
  maybe(doc, "task", c.task, seen);
  maybe(doc, "train_path", c.train_path, seen);
  maybe(doc, "valid_path", c.valid_path, seen);
  maybe(doc, "test_path", c.test_path, seen);
  maybe(doc, "mnist_images", c.mnist_images, seen);
  maybe(doc, "mnist_labels", c.mnist_labels, seen);
  maybe(doc, "mnist_test_images", c.mnist_test_images, seen);
  maybe(doc, "mnist_test_labels", c.mnist_test_labels, seen);
  maybe(doc, "mnist_variant", c.mnist_variant, seen);
  maybe(doc, "feature_path", c.feature_path, seen);
  maybe(doc, "hidden", c.hidden, seen);
  maybe(doc, "layers", c.layers, seen);
  maybe(doc, "embedding_dim", c.embedding_dim, seen);
  maybe(doc, "gate_depth", c.gate_depth, seen);
  maybe(doc, "batch", c.batch, seen);
  maybe(doc, "epochs", c.epochs, seen);
  maybe(doc, "lr", c.lr, seen);
  maybe(doc, "clip_norm", c.clip_norm, seen);
  maybe(doc, "lambda", c.lambda, seen);
  maybe(doc, "tau", c.tau, seen);
  maybe(doc, "forget_bias", c.forget_bias, seen);
  maybe(doc, "beta_forget_bias", c.beta_forget_bias, seen);
  maybe(doc, "prior_mode", c.prior_mode, seen);
  maybe(doc, "prior_alpha", c.prior_alpha, seen);
  maybe(doc, "prior_beta", c.prior_beta, seen);
  maybe(doc, "kernel_length", c.kernel_length, seen);
  maybe(doc, "kernel_scale", c.kernel_scale, seen);
  maybe(doc, "seed_init", c.seed_init, seen);
  maybe(doc, "seed_shuffle", c.seed_shuffle, seen);
  maybe(doc, "seed_sampler", c.seed_sampler, seen);
  maybe(doc, "seed_permutation", c.seed_permutation, seen);
  maybe(doc, "eval_mode", c.eval_mode, seen);
  maybe(doc, "out_dir", c.out_dir, seen);
  maybe(doc, "synth_sequences", c.synth_sequences, seen);
  maybe(doc, "synth_len", c.synth_len, seen);
  maybe(doc, "synth_values", c.synth_values, seen);
  maybe(doc, "max_train", c.max_train, seen);
  maybe(doc, "max_valid", c.max_valid, seen);
  maybe(doc, "max_test", c.max_test, seen);

  seen.insert("code_version");  // present in run_meta.json replays
  for (const auto& [key, value] : doc.items()) {
    if (!seen.count(key)) {
      throw UsageError("config: unknown key \"" + key + "\" in " + path);
    }
  }
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::json doc;
  doc["variant"] = c.variant;
  doc["task"] = c.task;
  doc["train_path"] = c.train_path;
  doc["valid_path"] = c.valid_path;
  doc["test_path"] = c.test_path;
  doc["mnist_images"] = c.mnist_images;
  doc["mnist_labels"] = c.mnist_labels;
  doc["mnist_test_images"] = c.mnist_test_images;
  doc["mnist_test_labels"] = c.mnist_test_labels;
  doc["mnist_variant"] = c.mnist_variant;
  doc["feature_path"] = c.feature_path;
  doc["hidden"] = c.hidden;
  doc["layers"] = c.layers;
  doc["embedding_dim"] = c.embedding_dim;
  doc["gate_depth"] = c.gate_depth;
  doc["batch"] = c.batch;
  doc["epochs"] = c.epochs;
  doc["lr"] = c.lr;
  doc["clip_norm"] = c.clip_norm;
  doc["lambda"] = c.lambda;
  doc["tau"] = c.tau;
  doc["forget_bias"] = c.forget_bias;
  doc["beta_forget_bias"] = c.beta_forget_bias;
  doc["prior_mode"] = c.prior_mode;
  doc["prior_alpha"] = c.prior_alpha;
  doc["prior_beta"] = c.prior_beta;
  doc["kernel_length"] = c.kernel_length;
  doc["kernel_scale"] = c.kernel_scale;
  doc["seed_init"] = c.seed_init;
  doc["seed_shuffle"] = c.seed_shuffle;
  doc["seed_sampler"] = c.seed_sampler;
  doc["seed_permutation"] = c.seed_permutation;
  doc["eval_mode"] = c.eval_mode;
  doc["out_dir"] = c.out_dir;
  doc["synth_sequences"] = c.synth_sequences;
  doc["synth_len"] = c.synth_len;
  doc["synth_values"] = c.synth_values;
  doc["max_train"] = c.max_train;
  doc["max_valid"] = c.max_valid;
  doc["max_test"] = c.max_test;
  return doc.dump(2);
}

void validate_config(const RunConfig& c) {
  cell_variant_from_string(c.variant);  // throws on unknown variants
  const std::set<std::string> tasks = {"classify", "music", "mnist",
                                       "synthetic"};
  if (!tasks.count(c.task)) {
    throw UsageError("config: unknown task \"" + c.task + "\"");
  }
  if (c.hidden <= 0 || c.layers <= 0 || c.embedding_dim <= 0 ||
      c.gate_depth <= 0) {
    throw UsageError("config: hidden/layers/embedding_dim/gate_depth must "
                     "be positive");
  }
  if (c.batch <= 0) throw UsageError("config: batch must be positive");
  if (c.epochs < 0) throw UsageError("config: epochs must be >= 0");
  if (!(c.lr > 0.0)) throw UsageError("config: lr must be positive");
  if (c.lambda < 0.0) throw UsageError("config: lambda must be >= 0");
  if (!(c.tau > 0.0)) throw UsageError("config: tau must be positive");
  if (!(c.clip_norm > 0.0)) {
    throw UsageError("config: clip_norm must be positive");
  }
  if (c.prior_mode != "constant" && c.prior_mode != "feature-kernel") {
    throw UsageError("config: prior_mode must be constant or feature-kernel");
  }
  if (!(c.prior_alpha > 0.0) || !(c.prior_beta > 0.0) ||
      !(c.kernel_length > 0.0) || !(c.kernel_scale > 0.0)) {
    throw UsageError("config: prior parameters must be positive");
  }
  if (c.eval_mode != "mean" && c.eval_mode != "sample") {
    throw UsageError("config: eval_mode must be mean or sample");
  }
  if (c.mnist_variant != "smnist" && c.mnist_variant != "pmnist") {
    throw UsageError("config: mnist_variant must be smnist or pmnist");
  }
  if (c.task == "classify" && c.train_path.empty()) {
    throw UsageError("config: classify task needs train_path");
  }
  if (c.task == "music" && c.train_path.empty()) {
    throw UsageError("config: music task needs train_path");
  }
  if (c.task == "mnist" && (c.mnist_images.empty() || c.mnist_labels.empty())) {
    throw UsageError("config: mnist task needs mnist_images and mnist_labels");
  }
  if (c.prior_mode == "feature-kernel") {
    if (c.variant != "bblstm5gp") {
      throw UsageError("config: feature-kernel prior requires bblstm5gp");
    }
    if (c.task != "classify" && c.task != "synthetic") {
      throw UsageError("config: feature-kernel prior needs a token task");
    }
    if (c.feature_path.empty() && c.task == "classify") {
      throw UsageError("config: feature-kernel prior needs feature_path");
    }
  }
}

}  // namespace betagate
