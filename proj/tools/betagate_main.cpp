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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "betagate/config.hpp"
#include "betagate/error.hpp"
#include "betagate/selfcheck.hpp"
#include "betagate/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CliState {
  betagate::RunConfig cfg;
  std::string config_path;
  bool seed_set = false;
  std::uint64_t master_seed = 0;
};

// Precedence: defaults < config file < flags < BETAGATE_OUT (output dir
// only). CLI11 fills `flags` during parsing; the file is applied first and
// the staged flag values afterwards.
void add_common_flags(CLI::App* cmd, CliState& state,
                      std::map<std::string, std::string>& flag_values) {
  cmd->add_option("--config", state.config_path, "JSON config file");
  auto opt = [&flag_values, cmd](const std::string& name,
                                 const std::string& desc) {
    cmd->add_option_function<std::string>(
        name,
        [&flag_values, name](const std::string& v) { flag_values[name] = v; },
        desc);
  };
  opt("--variant", "cell variant: lstm|cifg|g2lstm|blstm|bblstm3g|bblstm5g|"
                   "bblstm5gp");
  opt("--task", "task: classify|music|mnist|synthetic");
  opt("--hidden", "hidden units per layer");
  opt("--layers", "stacked layers");
  opt("--epochs", "training epochs");
  opt("--lr", "Adam learning rate");
  opt("--lambda", "KL weight");
  opt("--tau", "Gumbel-gate temperature");
  opt("--forget-bias", "initial forget-gate bias (sigmoid variants)");
  opt("--beta-forget-bias",
      "initial f-numerator shape-network bias (Beta variants)");
  opt("--batch", "batch size");
  opt("--out", "output directory");
  opt("--eval-mode", "mean|sample");
  opt("--train-data", "training dataset path");
  opt("--valid-data", "validation dataset path");
  opt("--test-data", "test dataset path");
  opt("--mnist-images", "IDX image file");
  opt("--mnist-labels", "IDX label file");
  opt("--mnist-test-images", "IDX test image file");
  opt("--mnist-test-labels", "IDX test label file");
  opt("--mnist-variant", "smnist|pmnist");
  opt("--prior-mode", "constant|feature-kernel");
  opt("--features", "feature-vector file for the kernel prior");
  cmd->add_option("--seed", state.master_seed,
                  "master seed; derives the init/shuffle/sampler seeds")
      ->each([&state](const std::string&) { state.seed_set = true; });
}

void apply_flag_overrides(CliState& state,
                          const std::map<std::string, std::string>& flags) {
  auto& cfg = state.cfg;
  for (const auto& [name, value] : flags) {
    if (name == "--variant") {
      cfg.variant = value;
    } else if (name == "--task") {
      cfg.task = value;
    } else if (name == "--hidden") {
      cfg.hidden = std::stoll(value);
    } else if (name == "--layers") {
      cfg.layers = std::stoi(value);
    } else if (name == "--epochs") {
      cfg.epochs = std::stoi(value);
    } else if (name == "--lr") {
      cfg.lr = std::stod(value);
    } else if (name == "--lambda") {
      cfg.lambda = std::stod(value);
    } else if (name == "--tau") {
      cfg.tau = std::stod(value);
    } else if (name == "--forget-bias") {
      cfg.forget_bias = std::stod(value);
    } else if (name == "--beta-forget-bias") {
      cfg.beta_forget_bias = std::stod(value);
    } else if (name == "--batch") {
      cfg.batch = std::stoll(value);
    } else if (name == "--out") {
      cfg.out_dir = value;
    } else if (name == "--eval-mode") {
      cfg.eval_mode = value;
    } else if (name == "--train-data") {
      cfg.train_path = value;
    } else if (name == "--valid-data") {
      cfg.valid_path = value;
    } else if (name == "--test-data") {
      cfg.test_path = value;
    } else if (name == "--mnist-images") {
      cfg.mnist_images = value;
    } else if (name == "--mnist-labels") {
      cfg.mnist_labels = value;
    } else if (name == "--mnist-test-images") {
      cfg.mnist_test_images = value;
    } else if (name == "--mnist-test-labels") {
      cfg.mnist_test_labels = value;
    } else if (name == "--mnist-variant") {
      cfg.mnist_variant = value;
    } else if (name == "--prior-mode") {
      cfg.prior_mode = value;
    } else if (name == "--features") {
      cfg.feature_path = value;
    }
  }
  if (state.seed_set) {
    cfg.seed_init = state.master_seed;
    cfg.seed_shuffle = state.master_seed + 1;
    cfg.seed_sampler = state.master_seed + 2;
  }
  if (const char* env_out = std::getenv("BETAGATE_OUT")) {
    cfg.out_dir = env_out;
  }
}

void resolve_config(CliState& state,
                    const std::map<std::string, std::string>& flags) {
  if (!state.config_path.empty()) {
    betagate::apply_config_file(state.cfg, state.config_path);
  }
  apply_flag_overrides(state, flags);
}

int run_train(CliState& state, bool lambda_sweep) {
  if (!lambda_sweep) {
    const auto outcome = betagate::train(state.cfg);
    std::printf("trained %s on %s: best %s %.6f at epoch %d\n",
                state.cfg.variant.c_str(), state.cfg.task.c_str(),
                outcome.higher_is_better ? "metric" : "nll",
                outcome.best_valid, outcome.best_epoch);
    std::printf("metrics: %s\n", outcome.metrics_path.c_str());
    std::printf("best checkpoint: %s\n", outcome.best_checkpoint.c_str());
    return kExitOk;
  }
  const double lambdas[4] = {0.001, 0.01, 0.1, 1.0};
  const std::string base = state.cfg.out_dir;
  for (double lambda : lambdas) {
    betagate::RunConfig cfg = state.cfg;
    cfg.lambda = lambda;
    std::ostringstream dir;
    dir << base << "/lambda_" << lambda;
    cfg.out_dir = dir.str();
    const auto outcome = betagate::train(cfg);
    std::printf("lambda=%-6g best %.6f at epoch %d -> %s\n", lambda,
                outcome.best_valid, outcome.best_epoch,
                outcome.metrics_path.c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bivariate-Beta gated LSTM toolkit"};
  app.require_subcommand(1);

  CliState state;
  std::map<std::string, std::string> flags;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  bool lambda_sweep = false;
  add_common_flags(train_cmd, state, flags);
  train_cmd->add_flag("--lambda-sweep", lambda_sweep,
                      "train at lambda in {0.001, 0.01, 0.1, 1.0}");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  add_common_flags(eval_cmd, state, flags);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")
      ->required();

  auto* diag_cmd = app.add_subcommand("diagnose", "run a diagnostic");
  std::string which;
  std::string diag_checkpoint;
  add_common_flags(diag_cmd, state, flags);
  diag_cmd->add_option("--which", which,
                       "histogram|correlation|gradflow|proposition|synthetic")
      ->required();
  diag_cmd->add_option("--checkpoint", diag_checkpoint,
                       "checkpoint (required for model diagnostics)");

  auto* check_cmd = app.add_subcommand("check", "run the property suite");
  std::string report_path;
  check_cmd->add_option("--report", report_path,
                        "write the JSON report here (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed() || eval_cmd->parsed() || diag_cmd->parsed()) {
      resolve_config(state, flags);
    }
    if (train_cmd->parsed()) {
      return run_train(state, lambda_sweep);
    }
    if (eval_cmd->parsed()) {
      const auto outcome = betagate::evaluate(state.cfg, checkpoint);
      if (outcome.passes == 1) {
        std::printf("test %s: %.6f\n",
                    outcome.higher_is_better ? "accuracy" : "frame-nll",
                    outcome.metric);
      } else {
        std::printf("test %s over %d stochastic passes: %.6f +/- %.6f\n",
                    outcome.higher_is_better ? "accuracy" : "frame-nll",
                    outcome.passes, outcome.metric, outcome.stddev);
      }
      return kExitOk;
    }
    if (diag_cmd->parsed()) {
      betagate::diagnose(state.cfg, diag_checkpoint, which,
                         state.cfg.out_dir);
      std::printf("diagnostic %s written to %s\n", which.c_str(),
                  state.cfg.out_dir.c_str());
      return kExitOk;
    }
    // check
    const auto report = betagate::run_selfcheck();
    const std::string json = betagate::selfcheck_report_json(report);
    if (report_path.empty()) {
      std::cout << json << "\n";
    } else {
      std::ofstream out(report_path);
      out << json << "\n";
      std::printf("report written to %s\n", report_path.c_str());
    }
    for (const auto& r : report.results) {
      std::printf("%-45s %s (measured %.6g %s %.6g)\n", r.name.c_str(),
                  r.pass ? "PASS" : "FAIL", r.measured, r.relation.c_str(),
                  r.threshold);
    }
    std::printf("%zu properties, %s\n", report.results.size(),
                report.all_pass ? "all passed" : "FAILURES present");
    return report.all_pass ? kExitOk : kExitNumeric;
  } catch (const betagate::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const betagate::DomainError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const betagate::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const betagate::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  }
}
