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

#ifndef BETAGATE_DIAGNOSTICS_HPP_
#define BETAGATE_DIAGNOSTICS_HPP_

#include <array>
#include <string>
#include <vector>

#include "betagate/cells.hpp"
#include "betagate/rng.hpp"
#include "betagate/tape.hpp"

namespace betagate {

// ---- gate histograms ---------------------------------------------------------

struct HistogramRow {
  double lo = 0.0, hi = 0.0;
  std::int64_t count = 0;
};

struct GateHistogram {
  std::vector<HistogramRow> input, forget, output;
};

// Bin counts of gate values over [0,1] collected from per-step traces.
GateHistogram gate_histogram(const std::vector<GateTrace>& traces, int bins);
void write_histogram_csv(const std::string& path, const GateHistogram& hist);

// ---- input-forget correlation -------------------------------------------------

struct CorrelationReport {
  double rho = 0.0;
  double std_error = 0.0;
  std::int64_t draws = 0;
  bool defined = true;  // false when a gate is constant (zero variance)
};

// Monte-Carlo Pearson correlation of (i, f) at fixed Gamma shapes. The shape
// vector length selects the construction: 4 = independent Beta gates,
// 3 = shared-denominator, 5 = the signed-correlation construction.
CorrelationReport gate_correlation(const std::vector<double>& shapes,
                                   std::int64_t draws, RngStream rng);

void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationReport>& reports);

// Random sweep over 5-Gamma shape configurations; returns the configs with
// the most negative and most positive correlations found.
struct CorrelationSweep {
  std::array<double, 5> most_negative_config{}, most_positive_config{};
  double min_rho = 1.0, max_rho = -1.0;
};

CorrelationSweep correlation_sweep_5g(int configs, std::int64_t draws,
                                      RngStream rng);

// ---- gradient flow -------------------------------------------------------------

// Per-timestep mean (over the batch) L2 norm of d loss / d c_t for one
// layer. Call after building the loss on `tape`; this runs backward.
std::vector<double> gradient_norm_trace(Tape& tape, const UnrollResult& run,
                                        const Tensor& loss, int layer = 0);
void write_gradnorm_csv(const std::string& path,
                        const std::vector<double>& norms);

// ---- Proposition 1 -------------------------------------------------------------

// Closed-form bounds on d i_t / d U^(1) at U^(1) = 0.5 with u_{3:5} = 0.5.
double proposition1_s0(double delta);
double proposition1_s1(double delta);
// Branch point 8/1167 and the flat upper bound 6260063/18180288 of the
// large-delta branch.
inline constexpr double kProp1BranchDelta = 8.0 / 1167.0;
inline constexpr double kProp1UpperConst =
    6260063.0 / 18180288.0;

struct PropositionReport {
  double delta = 0.0;
  double s0 = 0.0;      // lower bound
  double s1 = 0.0;      // small-delta upper bound S1(delta)
  double upper = 0.0;   // bound actually applied (S1 or the branch constant)
  double containment_rate = 0.0;
  double mean_derivative = 0.0;
  std::int64_t draws = 0;
  bool sampling_failed = false;  // rejection acceptance rate fell below 1e-4
};

// Draws u ~ Gamma(0.5, 1) restricted to |u - 0.5| <= delta * 0.5 by
// rejection, evaluates the pathwise derivative of the 5G input gate and
// reports how many draws land inside the proposition's bounds. Violations
// are reported, not asserted.
std::vector<PropositionReport> verify_proposition1(
    const std::vector<double>& deltas, std::int64_t n_draws, RngStream rng);

void write_proposition_csv(const std::string& path,
                           const std::vector<PropositionReport>& reports);

// ---- synthetic two-regime demo --------------------------------------------------

struct SyntheticDemoConfig {
  std::uint64_t seed = 1;
  std::size_t sequences = 384;
  int seq_len = 12;
  int values = 4;
  std::int64_t hidden = 32;
  int max_epochs = 50;
  double target_accuracy = 0.95;
  double lr = 3e-3;
  std::int64_t batch = 32;
  std::int64_t corr_draws = 2000;
};

struct SyntheticDemoRow {
  int t = 0;
  int regime = 0;  // 0 = copy, 1 = overwrite
  double mean_i = 0.0, mean_f = 0.0, rho = 0.0;
};

struct SyntheticDemoResult {
  double train_accuracy = 0.0;
  int epochs_run = 0;
  std::vector<SyntheticDemoRow> rows;
};

// Trains a small 5G cell on the two-regime copy/overwrite task, then
// reports per-timestep gate means and Monte-Carlo correlation split by
// regime.
SyntheticDemoResult synthetic_correlation_demo(const SyntheticDemoConfig& cfg);
void write_synthetic_demo_csv(const std::string& path,
                              const SyntheticDemoResult& result);

}  // namespace betagate

#endif  // BETAGATE_DIAGNOSTICS_HPP_
