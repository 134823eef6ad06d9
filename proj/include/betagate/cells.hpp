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

#ifndef BETAGATE_CELLS_HPP_
#define BETAGATE_CELLS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "betagate/checkpoint.hpp"
#include "betagate/rng.hpp"
#include "betagate/tape.hpp"
#include "betagate/tensor.hpp"

namespace betagate {

// Recurrent cell family sharing one step contract. Swapping the variant
// changes no caller code.
enum class CellVariant {
  kLstm,      // sigmoid gates
  kCifg,      // coupled input-forget: f = 1 - i
  kG2Lstm,    // binary-concrete (Gumbel) input/forget gates
  kBlstm,     // independent Beta gates from 4 Gamma draws
  kBblstm3g,  // bivariate Beta, 3 Gamma draws, shared denominator
  kBblstm5g,  // bivariate Beta, 5 Gamma draws, signed correlation
  kBblstm5gp  // 5G with a Gamma prior and per-step KL
};

CellVariant cell_variant_from_string(const std::string& id);
std::string to_string(CellVariant variant);
bool is_stochastic(CellVariant variant);
bool is_beta_variant(CellVariant variant);

// Sampled gates for training; analytic gate means for deterministic
// evaluation.
enum class GateMode { kSample, kMean };

struct CellState {
  Tensor c;  // [batch x hidden]
  Tensor h;  // [batch x hidden]
};

// Per-step record of gate values, raw Gamma draws and their shapes.
struct GateTrace {
  Tensor i, f, o;              // gate values in (0,1)
  std::vector<Tensor> u;       // raw draws u^(1..J); empty when not sampled
  std::vector<Tensor> shapes;  // Gamma shape blocks U^(1..J); empty for
                               // sigmoid-gated variants
  Tensor kl;                   // scalar KL for this step (5G+p only)
};

struct CellDims {
  std::int64_t input = 0;
  std::int64_t hidden = 0;
  int gate_depth = 1;  // layers in each shape network g_j
  // Initial forget-gate bias for the sigmoid-forget variants. +1 is the
  // usual default; long sequences (hundreds of steps) need a larger value
  // so the initial memory half-life spans the sequence.
  double forget_bias = 1.0;
  // Same lever for the Beta variants: added to the final bias of the shape
  // network whose draw appears only in the forget gate's numerator (g3 for
  // BLSTM, g2 for 3G and 5G), pushing the initial E[f] above 1/2.
  double beta_forget_bias = 0.0;
};

// Prior for the 5G+p step. Constant Gamma(alpha0, beta0) per unit and group;
// when kernel_shape_g12 is defined (an on-tape [batch x hidden] tensor from
// the RBF feature kernel), groups 1 and 2 use it as prior shape with rate 1.
struct StepPrior {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  Tensor kernel_shape_g12;
};

// Shape floor added after softplus so no Gamma shape can collapse to zero.
inline constexpr double kShapeFloor = 1e-4;

// Creates and initializes all parameters of one cell, names prefixed (e.g.
// "layer0."). Weights are uniform in +/-1/sqrt(fan-in); forget-gate bias is
// +1 for the sigmoid-forget variants; shape-network biases are zero, which
// puts every initial Gamma shape near ln 2.
ParamMap init_cell_params(CellVariant variant, const CellDims& dims,
                          RngStream rng, const std::string& prefix);

std::int64_t param_count(const ParamMap& params);

// On-tape view of a parameter collection (leaves registered on `tape`).
class TapeParams {
 public:
  TapeParams(Tape& tape, const ParamMap& params);
  const Tensor& get(const std::string& name) const;
  const ParamMap& map() const { return on_tape_; }

 private:
  ParamMap on_tape_;
};

// The Gamma shape blocks U^(j) = softplus(affine_j(concat(x, h))) + floor,
// j in [1, count].
std::vector<Tensor> compute_shapes(Tape& tape, const TapeParams& params,
                                   const std::string& prefix,
                                   const Tensor& x_t, const Tensor& h_prev,
                                   int count, int gate_depth);

// One step of each variant. All share (state', trace) semantics; `rng` is
// the stream for this (layer, timestep) site and is split internally per
// gate block.
CellState step_lstm(Tape& tape, const TapeParams& params,
                    const std::string& prefix, const Tensor& x_t,
                    const CellState& state, GateTrace* trace);

CellState step_cifg(Tape& tape, const TapeParams& params,
                    const std::string& prefix, const Tensor& x_t,
                    const CellState& state, GateTrace* trace);

CellState step_g2lstm(Tape& tape, const TapeParams& params,
                      const std::string& prefix, const Tensor& x_t,
                      const CellState& state, double tau, GateMode mode,
                      const RngStream& rng, GateTrace* trace);

CellState step_blstm(Tape& tape, const TapeParams& params,
                     const std::string& prefix, const Tensor& x_t,
                     const CellState& state, GateMode mode, int gate_depth,
                     const RngStream& rng, GateTrace* trace);

CellState step_bblstm3g(Tape& tape, const TapeParams& params,
                        const std::string& prefix, const Tensor& x_t,
                        const CellState& state, GateMode mode, int gate_depth,
                        const RngStream& rng, GateTrace* trace);

CellState step_bblstm5g(Tape& tape, const TapeParams& params,
                        const std::string& prefix, const Tensor& x_t,
                        const CellState& state, GateMode mode, int gate_depth,
                        const RngStream& rng, GateTrace* trace);

CellState step_bblstm5gp(Tape& tape, const TapeParams& params,
                         const std::string& prefix, const Tensor& x_t,
                         const CellState& state, GateMode mode,
                         int gate_depth, const RngStream& rng,
                         const StepPrior& prior, GateTrace* trace);

struct UnrollOptions {
  GateMode mode = GateMode::kSample;
  double tau = 1.0;  // g2lstm temperature
  int gate_depth = 1;
  int layers = 1;
  std::optional<StepPrior> prior;  // required for 5G+p
  // Per-step kernel prior shapes for groups 1-2 ([T] of on-tape
  // [batch x hidden] tensors); overrides StepPrior::kernel_shape_g12.
  const std::vector<Tensor>* kernel_shapes = nullptr;
  // Per-step validity masks [T] of [batch]; state freezes where mask is 0.
  const std::vector<Tensor>* masks = nullptr;
  bool collect_traces = true;
};

struct UnrollResult {
  std::vector<Tensor> outputs;                  // [T] of [batch x hidden]
  std::vector<std::vector<CellState>> states;   // [layer][T]
  std::vector<std::vector<GateTrace>> traces;   // [layer][T] (if collected)
  Tensor kl_sum;                                // scalar; zero if no KL terms
};

// Iterates the chosen step over `inputs` ([T] of [batch x input]) through
// `opts.layers` stacked cells whose parameters carry prefixes "layer0.",
// "layer1.", ... Layer l consumes layer l-1 hidden states.
UnrollResult unroll(CellVariant variant, Tape& tape, const TapeParams& params,
                    const std::vector<Tensor>& inputs,
                    const CellState& initial, const RngStream& rng,
                    const UnrollOptions& opts);

}  // namespace betagate

#endif  // BETAGATE_CELLS_HPP_
