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

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "betagate/checkpoint.hpp"
#include "betagate/config.hpp"
#include "betagate/data.hpp"
#include "betagate/error.hpp"
#include "betagate/selfcheck.hpp"
#include "betagate/trainer.hpp"

using namespace betagate;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("betagate_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_synthetic_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.task = "synthetic";
  cfg.variant = "bblstm5g";
  cfg.hidden = 8;
  cfg.embedding_dim = 8;
  cfg.epochs = 2;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  cfg.synth_sequences = 64;
  cfg.synth_len = 8;
  cfg.out_dir = out_dir;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BETAGATE_CLI_PATH) + " " + args +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config file parsing, overrides and unknown keys") {
  TempDir dir;
  const std::string path = dir.file("cfg.json");
  {
    std::ofstream out(path);
    out << R"({"variant": "cifg", "hidden": 24, "epochs": 7})";
  }
  RunConfig cfg;
  apply_config_file(cfg, path);
  CHECK(cfg.variant == "cifg");
  CHECK(cfg.hidden == 24);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.lr == 1e-3);  // default untouched

  const std::string bad = dir.file("bad.json");
  {
    std::ofstream out(bad);
    out << R"({"hiden": 24})";
  }
  RunConfig cfg2;
  CHECK_THROWS_AS(apply_config_file(cfg2, bad), UsageError);

  // round trip through config_to_json
  const std::string round = dir.file("round.json");
  {
    std::ofstream out(round);
    out << config_to_json(cfg);
  }
  RunConfig cfg3;
  apply_config_file(cfg3, round);
  CHECK(cfg3.variant == "cifg");
  CHECK(cfg3.hidden == 24);
}

TEST_CASE("validate_config rejects bad combinations") {
  RunConfig cfg;
  cfg.task = "classify";  // needs train_path
  CHECK_THROWS_AS(validate_config(cfg), UsageError);

  RunConfig cfg2;
  cfg2.variant = "nonsense";
  CHECK_THROWS_AS(validate_config(cfg2), UsageError);

  RunConfig cfg3;
  cfg3.prior_mode = "feature-kernel";
  cfg3.variant = "lstm";
  CHECK_THROWS_AS(validate_config(cfg3), UsageError);

  RunConfig ok = tiny_synthetic_config("/tmp/unused");
  validate_config(ok);  // should not throw
}

TEST_CASE("train: epochs=0 writes checkpoint and no metric rows") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("run"));
  cfg.epochs = 0;
  const auto outcome = train(cfg);
  CHECK(outcome.rows.empty());
  CHECK(std::filesystem::exists(outcome.last_checkpoint));
  CHECK(std::filesystem::exists(outcome.best_checkpoint));
  CHECK(slurp(outcome.metrics_path).empty());
}

TEST_CASE("train: same seeds give bit-identical metrics") {
  TempDir dir;
  RunConfig a = tiny_synthetic_config(dir.file("a"));
  RunConfig b = tiny_synthetic_config(dir.file("b"));
  const auto oa = train(a);
  const auto ob = train(b);
  CHECK(!slurp(oa.metrics_path).empty());
  CHECK(slurp(oa.metrics_path) == slurp(ob.metrics_path));

  RunConfig c = tiny_synthetic_config(dir.file("c"));
  c.seed_sampler = 99;
  const auto oc = train(c);
  CHECK(slurp(oa.metrics_path) != slurp(oc.metrics_path));
}

TEST_CASE("train writes replayable run metadata") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("meta"));
  const auto outcome = train(cfg);
  RunConfig replay;
  apply_config_file(replay, outcome.meta_path);
  replay.out_dir = dir.file("replayed");
  const auto replay_outcome = train(replay);
  CHECK(slurp(outcome.metrics_path) == slurp(replay_outcome.metrics_path));
}

TEST_CASE("lambda=0 bblstm5gp matches bblstm5g trajectories exactly") {
  TempDir dir;
  RunConfig plain = tiny_synthetic_config(dir.file("plain"));
  plain.variant = "bblstm5g";
  RunConfig prior = tiny_synthetic_config(dir.file("prior"));
  prior.variant = "bblstm5gp";
  prior.lambda = 0.0;
  const auto op = train(plain);
  const auto oq = train(prior);
  REQUIRE(op.rows.size() == oq.rows.size());
  for (std::size_t i = 0; i < op.rows.size(); ++i) {
    CHECK(op.rows[i].train_loss == oq.rows[i].train_loss);
    CHECK(op.rows[i].valid_metric == oq.rows[i].valid_metric);
  }
  // parameters themselves identical
  const std::string pa = slurp(op.last_checkpoint);
  const std::string pb = slurp(oq.last_checkpoint);
  // checkpoints embed the config (variant name differs); compare the params
  // through a reload
  auto ca = load_checkpoint(op.last_checkpoint);
  auto cb = load_checkpoint(oq.last_checkpoint);
  REQUIRE(ca.params.size() == cb.params.size());
  for (const auto& [name, tensor] : ca.params) {
    CHECK(cb.params.at(name).data() == tensor.data());
  }
}

TEST_CASE("evaluate: mean mode deterministic, sample mode reports spread") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("run"));
  const auto outcome = train(cfg);

  cfg.eval_mode = "mean";
  const auto e1 = evaluate(cfg, outcome.best_checkpoint);
  const auto e2 = evaluate(cfg, outcome.best_checkpoint);
  CHECK(e1.metric == e2.metric);
  CHECK(e1.stddev == 0.0);
  CHECK(e1.passes == 1);

  cfg.eval_mode = "sample";
  const auto es = evaluate(cfg, outcome.best_checkpoint);
  CHECK(es.passes == 10);
  CHECK(es.stddev >= 0.0);
}

TEST_CASE("evaluate: random-init classifier sits at chance on balanced data") {
  // labels drawn independently of the tokens, so no model can beat chance
  TempDir dir;
  RngStream rng(77, 0);
  ClassificationData data;
  data.vocab = 6;
  data.classes = 2;
  for (int i = 0; i < 1000; ++i) {
    LabeledSequence item;
    for (int t = 0; t < 6; ++t) {
      item.tokens.push_back(static_cast<int>(rng.next_u64() % 6));
    }
    item.label = static_cast<int>(rng.next_u64() % 2);
    data.items.push_back(std::move(item));
  }
  const std::string path = dir.file("random.jsonl");
  write_jsonl_classification(path, data);

  RunConfig cfg;
  cfg.task = "classify";
  cfg.variant = "lstm";
  cfg.hidden = 8;
  cfg.embedding_dim = 8;
  cfg.epochs = 0;
  cfg.batch = 32;
  cfg.train_path = path;
  cfg.valid_path = path;
  cfg.test_path = path;
  cfg.out_dir = dir.file("run");
  const auto outcome = train(cfg);
  const auto eval_out = evaluate(cfg, outcome.best_checkpoint);
  CHECK(eval_out.metric >= 0.44);
  CHECK(eval_out.metric <= 0.56);
}

TEST_CASE("evaluate: architecture mismatch lists differing shapes") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("run"));
  const auto outcome = train(cfg);
  RunConfig other = cfg;
  other.hidden = 16;
  try {
    evaluate(other, outcome.best_checkpoint);
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("architecture") != std::string::npos);
    CHECK(std::string(e.what()).find("16") != std::string::npos);
  }
}

TEST_CASE("diagnose: proposition needs no checkpoint, others dispatch") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("run"));
  const auto outcome = train(cfg);

  diagnose(cfg, "", "proposition", dir.file("diag"));
  CHECK(std::filesystem::exists(dir.file("diag") + "/proposition.csv"));

  diagnose(cfg, outcome.best_checkpoint, "histogram", dir.file("diag"));
  const std::string hist = slurp(dir.file("diag") + "/histogram.csv");
  // header + 20 bins per gate
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 1 + 3 * 20);

  diagnose(cfg, outcome.best_checkpoint, "correlation", dir.file("diag"));
  CHECK(std::filesystem::exists(dir.file("diag") + "/correlation.csv"));

  diagnose(cfg, outcome.best_checkpoint, "gradflow", dir.file("diag"));
  const std::string flow = slurp(dir.file("diag") + "/gradflow.csv");
  CHECK(std::count(flow.begin(), flow.end(), '\n') ==
        1 + cfg.synth_len);  // header + T rows

  CHECK_THROWS_AS(diagnose(cfg, outcome.best_checkpoint, "bogus",
                           dir.file("diag")),
                  UsageError);

  // correlation diagnostic rejects sigmoid-gated variants
  RunConfig lstm_cfg = cfg;
  lstm_cfg.variant = "lstm";
  lstm_cfg.out_dir = dir.file("lstm_run");
  const auto lstm_outcome = train(lstm_cfg);
  CHECK_THROWS_AS(diagnose(lstm_cfg, lstm_outcome.best_checkpoint,
                           "correlation", dir.file("diag")),
                  UsageError);
}

TEST_CASE("gradflow csv deterministic across repeats") {
  TempDir dir;
  RunConfig cfg = tiny_synthetic_config(dir.file("run"));
  const auto outcome = train(cfg);
  diagnose(cfg, outcome.best_checkpoint, "gradflow", dir.file("d1"));
  diagnose(cfg, outcome.best_checkpoint, "gradflow", dir.file("d2"));
  CHECK(slurp(dir.file("d1") + "/gradflow.csv") ==
        slurp(dir.file("d2") + "/gradflow.csv"));
}

TEST_CASE("selfcheck: all properties pass, at least 20 rows, none skipped") {
  const auto report = run_selfcheck();
  CHECK(report.all_pass);
  CHECK(report.results.size() >= 20);
  for (const auto& r : report.results) {
    CHECK(!r.name.empty());
    CHECK(!r.relation.empty());
  }
  // machine-readable report parses back
  const std::string json = selfcheck_report_json(report);
  CHECK(json.find("\"all_pass\"") != std::string::npos);
}

TEST_CASE("selfcheck: injected sampler fault fails the moment property") {
  SelfCheckOptions opts;
  opts.fault_shift_gamma_mean = true;
  const auto report = run_selfcheck(opts);
  CHECK(!report.all_pass);
  bool moment_failed = false;
  for (const auto& r : report.results) {
    if (r.name.find("sampler mean") != std::string::npos) {
      moment_failed = !r.pass;
    }
  }
  CHECK(moment_failed);
}

TEST_CASE("cli binary: exit codes") {
  TempDir dir;
  // usage error: unknown subcommand
  CHECK(run_cli("explode") == 1);
  // usage error: unknown variant
  CHECK(run_cli("train --task synthetic --variant warp --epochs 1 --out " +
                dir.file("x")) == 1);
  // data error: missing dataset file
  CHECK(run_cli("train --task classify --train-data /nonexistent.jsonl "
                "--epochs 1 --out " +
                dir.file("y")) == 2);
  // success: the check subcommand end to end
  CHECK(run_cli("check --report " + dir.file("report.json")) == 0);
  CHECK(std::filesystem::exists(dir.file("report.json")));
  // success: tiny training run through the binary
  CHECK(run_cli("train --task synthetic --variant cifg --hidden 8 "
                "--epochs 1 --batch 16 --out " +
                dir.file("tiny")) == 0);
  CHECK(std::filesystem::exists(dir.file("tiny") + "/metrics.jsonl"));
}

TEST_CASE("cli binary: BETAGATE_OUT overrides the output directory") {
  TempDir dir;
  const std::string env_dir = dir.file("env_out");
  const std::string cmd = std::string("BETAGATE_OUT=") + env_dir + " " +
                          BETAGATE_CLI_PATH +
                          " train --task synthetic --variant cifg --hidden 8 "
                          "--epochs 1 --batch 16 --out " +
                          dir.file("flag_out") + " >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(std::filesystem::exists(env_dir + "/metrics.jsonl"));
  CHECK(!std::filesystem::exists(dir.file("flag_out") + "/metrics.jsonl"));
}
