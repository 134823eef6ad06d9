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

#include "betagate/cells.hpp"

#include <cmath>
#include <utility>

#include "betagate/error.hpp"

namespace betagate {

namespace {

// Stream ids for the per-step gate draws; gate block j uses rng.split(j).
// The ids just have to be stable and distinct.
constexpr std::uint64_t kStreamGateBase = 1;

Tensor uniform_init(Shape shape, double bound, RngStream& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = bound * (2.0 * rng.next_uniform() - 1.0);
  return Tensor(std::move(shape), std::move(v));
}

// One sigmoid-gate affine block: W_x [in x hid], W_h [hid x hid], b [hid].
void add_affine_block(ParamMap& params, const std::string& prefix,
                      const std::string& gate, const CellDims& dims,
                      RngStream& rng, double bias_init) {
  const double bx = 1.0 / std::sqrt(static_cast<double>(dims.input));
  const double bh = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  params.emplace(prefix + "W_x" + gate,
                 uniform_init({dims.input, dims.hidden}, bx, rng));
  params.emplace(prefix + "W_h" + gate,
                 uniform_init({dims.hidden, dims.hidden}, bh, rng));
  params.emplace(prefix + "b_" + gate,
                 Tensor({dims.hidden}, bias_init));
}

// One shape-network g_j: depth-1 hidden tanh layers then a final affine
// whose softplus output becomes the Gamma shape block.
void add_shape_network(ParamMap& params, const std::string& prefix, int j,
                       const CellDims& dims, RngStream& rng,
                       double final_bias) {
  std::int64_t in = dims.input + dims.hidden;
  for (int layer = 0; layer < dims.gate_depth; ++layer) {
    const std::string name =
        prefix + "g" + std::to_string(j) + "_" + std::to_string(layer);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    params.emplace(name + ".W", uniform_init({in, dims.hidden}, bound, rng));
    const double bias = (layer + 1 == dims.gate_depth) ? final_bias : 0.0;
    params.emplace(name + ".b", Tensor({dims.hidden}, bias));
    in = dims.hidden;
  }
}

// Shape networks whose draws appear in the forget gate's numerator and
// nowhere in the input gate (u4 is excluded for 5G: it also sits in the
// input gate's denominator, so biasing it would close the input gate).
bool feeds_forget_numerator(CellVariant variant, int j) {
  switch (variant) {
    case CellVariant::kBlstm:
      return j == 3;
    case CellVariant::kBblstm3g:
      return j == 2;
    case CellVariant::kBblstm5g:
    case CellVariant::kBblstm5gp:
      return j == 2;
    default:
      return false;
  }
}

int shape_block_count(CellVariant variant) {
  switch (variant) {
    case CellVariant::kBlstm:
      return 4;
    case CellVariant::kBblstm3g:
      return 3;
    case CellVariant::kBblstm5g:
    case CellVariant::kBblstm5gp:
      return 5;
    default:
      return 0;
  }
}

Tensor affine(Tape& tape, const TapeParams& params, const std::string& prefix,
              const std::string& gate, const Tensor& x_t, const Tensor& h) {
  Tensor pre = tape.add(tape.matmul(x_t, params.get(prefix + "W_x" + gate)),
                        params.get(prefix + "b_" + gate));
  return tape.add(pre, tape.matmul(h, params.get(prefix + "W_h" + gate)));
}

CellState cell_update(Tape& tape, const Tensor& i, const Tensor& f,
                      const Tensor& o, const Tensor& candidate,
                      const CellState& state) {
  Tensor c_next =
      tape.add(tape.mul(f, state.c), tape.mul(i, candidate));
  Tensor h_next = tape.mul(o, tape.tanh(c_next));
  return CellState{c_next, h_next};
}

void record_trace(GateTrace* trace, Tensor i, Tensor f, Tensor o,
                  std::vector<Tensor> u = {},
                  std::vector<Tensor> shapes = {}) {
  if (!trace) return;
  trace->i = std::move(i);
  trace->f = std::move(f);
  trace->o = std::move(o);
  trace->u = std::move(u);
  trace->shapes = std::move(shapes);
}

// Shared tail of every Beta-gated step: output gate, candidate, update.
CellState finish_beta_step(Tape& tape, const TapeParams& params,
                           const std::string& prefix, const Tensor& x_t,
                           const CellState& state, const Tensor& i,
                           const Tensor& f, GateTrace* trace,
                           std::vector<Tensor> u, std::vector<Tensor> shapes) {
  Tensor o = tape.sigmoid(affine(tape, params, prefix, "o", x_t, state.h));
  Tensor candidate = tape.tanh(affine(tape, params, prefix, "c", x_t, state.h));
  record_trace(trace, i, f, o, std::move(u), std::move(shapes));
  return cell_update(tape, i, f, o, candidate, state);
}

}  // namespace

CellVariant cell_variant_from_string(const std::string& id) {
  if (id == "lstm") return CellVariant::kLstm;
  if (id == "cifg") return CellVariant::kCifg;
  if (id == "g2lstm") return CellVariant::kG2Lstm;
  if (id == "blstm") return CellVariant::kBlstm;
  if (id == "bblstm3g") return CellVariant::kBblstm3g;
  if (id == "bblstm5g") return CellVariant::kBblstm5g;
  if (id == "bblstm5gp") return CellVariant::kBblstm5gp;
  throw UsageError("unknown cell variant: " + id);
}

std::string to_string(CellVariant variant) {
  switch (variant) {
    case CellVariant::kLstm:
      return "lstm";
    case CellVariant::kCifg:
      return "cifg";
    case CellVariant::kG2Lstm:
      return "g2lstm";
    case CellVariant::kBlstm:
      return "blstm";
    case CellVariant::kBblstm3g:
      return "bblstm3g";
    case CellVariant::kBblstm5g:
      return "bblstm5g";
    case CellVariant::kBblstm5gp:
      return "bblstm5gp";
  }
  throw UsageError("bad CellVariant");
}

bool is_stochastic(CellVariant variant) {
  return variant != CellVariant::kLstm && variant != CellVariant::kCifg;
}

bool is_beta_variant(CellVariant variant) {
  return shape_block_count(variant) > 0;
}

ParamMap init_cell_params(CellVariant variant, const CellDims& dims,
                          RngStream rng, const std::string& prefix) {
  if (dims.input <= 0 || dims.hidden <= 0 || dims.gate_depth < 1) {
    throw UsageError("init_cell_params: invalid dimensions");
  }
  ParamMap params;
  switch (variant) {
    case CellVariant::kLstm:
    case CellVariant::kG2Lstm:
      add_affine_block(params, prefix, "i", dims, rng, 0.0);
      add_affine_block(params, prefix, "f", dims, rng, dims.forget_bias);
      break;
    case CellVariant::kCifg:
      add_affine_block(params, prefix, "i", dims, rng, 0.0);
      break;
    case CellVariant::kBlstm:
    case CellVariant::kBblstm3g:
    case CellVariant::kBblstm5g:
    case CellVariant::kBblstm5gp:
      for (int j = 1; j <= shape_block_count(variant); ++j) {
        const double bias = feeds_forget_numerator(variant, j)
                                ? dims.beta_forget_bias
                                : 0.0;
        add_shape_network(params, prefix, j, dims, rng, bias);
      }
      break;
  }
  add_affine_block(params, prefix, "o", dims, rng, 0.0);
  add_affine_block(params, prefix, "c", dims, rng, 0.0);
  return params;
}

std::int64_t param_count(const ParamMap& params) {
  std::int64_t n = 0;
  for (const auto& [name, tensor] : params) n += tensor.size();
  return n;
}

TapeParams::TapeParams(Tape& tape, const ParamMap& params) {
  for (const auto& [name, tensor] : params) {
    on_tape_.emplace(name, tape.leaf(tensor));
  }
}

const Tensor& TapeParams::get(const std::string& name) const {
  auto it = on_tape_.find(name);
  if (it == on_tape_.end()) {
    throw UsageError("TapeParams: unknown parameter " + name);
  }
  return it->second;
}

std::vector<Tensor> compute_shapes(Tape& tape, const TapeParams& params,
                                   const std::string& prefix,
                                   const Tensor& x_t, const Tensor& h_prev,
                                   int count, int gate_depth) {
  Tensor xh = tape.concat(x_t, h_prev);
  std::vector<Tensor> shapes;
  shapes.reserve(count);
  for (int j = 1; j <= count; ++j) {
    Tensor z = xh;
    for (int layer = 0; layer < gate_depth; ++layer) {
      const std::string name =
          prefix + "g" + std::to_string(j) + "_" + std::to_string(layer);
      z = tape.add(tape.matmul(z, params.get(name + ".W")),
                   params.get(name + ".b"));
      if (layer + 1 < gate_depth) z = tape.tanh(z);
    }
    shapes.push_back(tape.add_scalar(tape.softplus(z), kShapeFloor));
  }
  return shapes;
}

CellState step_lstm(Tape& tape, const TapeParams& params,
                    const std::string& prefix, const Tensor& x_t,
                    const CellState& state, GateTrace* trace) {
  Tensor i = tape.sigmoid(affine(tape, params, prefix, "i", x_t, state.h));
  Tensor f = tape.sigmoid(affine(tape, params, prefix, "f", x_t, state.h));
  Tensor o = tape.sigmoid(affine(tape, params, prefix, "o", x_t, state.h));
  Tensor candidate =
      tape.tanh(affine(tape, params, prefix, "c", x_t, state.h));
  record_trace(trace, i, f, o);
  return cell_update(tape, i, f, o, candidate, state);
}

CellState step_cifg(Tape& tape, const TapeParams& params,
                    const std::string& prefix, const Tensor& x_t,
                    const CellState& state, GateTrace* trace) {
  Tensor i = tape.sigmoid(affine(tape, params, prefix, "i", x_t, state.h));
  Tensor f = tape.sub(Tensor(i.shape(), 1.0), i);
  Tensor o = tape.sigmoid(affine(tape, params, prefix, "o", x_t, state.h));
  Tensor candidate =
      tape.tanh(affine(tape, params, prefix, "c", x_t, state.h));
  record_trace(trace, i, f, o);
  return cell_update(tape, i, f, o, candidate, state);
}

CellState step_g2lstm(Tape& tape, const TapeParams& params,
                      const std::string& prefix, const Tensor& x_t,
                      const CellState& state, double tau, GateMode mode,
                      const RngStream& rng, GateTrace* trace) {
  if (!(tau > 0.0)) {
    throw DomainError("step_g2lstm: tau must be positive");
  }
  Tensor pre_i = affine(tape, params, prefix, "i", x_t, state.h);
  Tensor pre_f = affine(tape, params, prefix, "f", x_t, state.h);
  Tensor i, f;
  if (mode == GateMode::kSample) {
    i = tape.binary_concrete(pre_i, tau, rng.split(kStreamGateBase));
    f = tape.binary_concrete(pre_f, tau, rng.split(kStreamGateBase + 1));
  } else {
    // Noise suppressed: the relaxation collapses to the plain sigmoid.
    i = tape.sigmoid(pre_i);
    f = tape.sigmoid(pre_f);
  }
  Tensor o = tape.sigmoid(affine(tape, params, prefix, "o", x_t, state.h));
  Tensor candidate =
      tape.tanh(affine(tape, params, prefix, "c", x_t, state.h));
  record_trace(trace, i, f, o);
  return cell_update(tape, i, f, o, candidate, state);
}

CellState step_blstm(Tape& tape, const TapeParams& params,
                     const std::string& prefix, const Tensor& x_t,
                     const CellState& state, GateMode mode, int gate_depth,
                     const RngStream& rng, GateTrace* trace) {
  std::vector<Tensor> shapes =
      compute_shapes(tape, params, prefix, x_t, state.h, 4, gate_depth);
  Tensor i, f;
  std::vector<Tensor> u;
  if (mode == GateMode::kSample) {
    for (int j = 0; j < 4; ++j) {
      u.push_back(tape.gamma_node(shapes[j], rng.split(kStreamGateBase + j)));
    }
    i = tape.div(u[0], tape.add(u[0], u[1]));
    f = tape.div(u[2], tape.add(u[2], u[3]));
  } else {
    // Analytic Beta means.
    i = tape.div(shapes[0], tape.add(shapes[0], shapes[1]));
    f = tape.div(shapes[2], tape.add(shapes[2], shapes[3]));
  }
  return finish_beta_step(tape, params, prefix, x_t, state, i, f, trace,
                          std::move(u), std::move(shapes));
}

CellState step_bblstm3g(Tape& tape, const TapeParams& params,
                        const std::string& prefix, const Tensor& x_t,
                        const CellState& state, GateMode mode, int gate_depth,
                        const RngStream& rng, GateTrace* trace) {
  std::vector<Tensor> shapes =
      compute_shapes(tape, params, prefix, x_t, state.h, 3, gate_depth);
  Tensor i, f;
  std::vector<Tensor> u;
  if (mode == GateMode::kSample) {
    for (int j = 0; j < 3; ++j) {
      u.push_back(tape.gamma_node(shapes[j], rng.split(kStreamGateBase + j)));
    }
    // u3 is shared between both denominators.
    i = tape.div(u[0], tape.add(u[0], u[2]));
    f = tape.div(u[1], tape.add(u[1], u[2]));
  } else {
    i = tape.div(shapes[0], tape.add(shapes[0], shapes[2]));
    f = tape.div(shapes[1], tape.add(shapes[1], shapes[2]));
  }
  return finish_beta_step(tape, params, prefix, x_t, state, i, f, trace,
                          std::move(u), std::move(shapes));
}

namespace {

// Gates of the 5-Gamma construction: the input gate's denominator omits
// u2, the forget gate's omits u1.
std::pair<Tensor, Tensor> gates_5g(Tape& tape, const std::vector<Tensor>& v) {
  Tensor i_num = tape.add(v[0], v[2]);           // u1 + u3
  Tensor f_num = tape.add(v[1], v[3]);           // u2 + u4
  Tensor tail = tape.add(v[3], v[4]);            // u4 + u5
  Tensor i = tape.div(i_num, tape.add(i_num, tail));
  Tensor f = tape.div(f_num, tape.add(tape.add(v[1], v[2]), tail));
  return {i, f};
}

}  // namespace

CellState step_bblstm5g(Tape& tape, const TapeParams& params,
                        const std::string& prefix, const Tensor& x_t,
                        const CellState& state, GateMode mode, int gate_depth,
                        const RngStream& rng, GateTrace* trace) {
  std::vector<Tensor> shapes =
      compute_shapes(tape, params, prefix, x_t, state.h, 5, gate_depth);
  Tensor i, f;
  std::vector<Tensor> u;
  if (mode == GateMode::kSample) {
    for (int j = 0; j < 5; ++j) {
      u.push_back(tape.gamma_node(shapes[j], rng.split(kStreamGateBase + j)));
    }
    std::tie(i, f) = gates_5g(tape, u);
  } else {
    // Ratio-of-means approximation: E[num]/E[den]. The exact mean of the
    // 5-Gamma ratio has no closed form.
    std::tie(i, f) = gates_5g(tape, shapes);
  }
  return finish_beta_step(tape, params, prefix, x_t, state, i, f, trace,
                          std::move(u), std::move(shapes));
}

CellState step_bblstm5gp(Tape& tape, const TapeParams& params,
                         const std::string& prefix, const Tensor& x_t,
                         const CellState& state, GateMode mode,
                         int gate_depth, const RngStream& rng,
                         const StepPrior& prior, GateTrace* trace) {
  if (!(prior.alpha0 > 0.0) || !(prior.beta0 > 0.0)) {
    throw DomainError("step_bblstm5gp: prior shapes must be positive");
  }
  // The shape networks double as the variational head: draws come from
  // q(u | x_t, h_{t-1}) and the KL is taken against the prior.
  std::vector<Tensor> shapes =
      compute_shapes(tape, params, prefix, x_t, state.h, 5, gate_depth);

  const std::int64_t batch = x_t.shape()[0];
  Tensor kl_total;
  for (int j = 0; j < 5; ++j) {
    Tensor p_shape;
    double p_rate;
    if (j < 2 && prior.kernel_shape_g12.defined()) {
      p_shape = prior.kernel_shape_g12;
      p_rate = 1.0;
    } else {
      p_shape = Tensor(shapes[j].shape(), prior.alpha0);
      p_rate = prior.beta0;
    }
    Tensor kl_j = tape.sum(tape.kl_gamma_node(shapes[j], p_shape, p_rate));
    kl_total = kl_total.defined() ? tape.add(kl_total, kl_j) : kl_j;
  }
  Tensor kl_step =
      tape.scale(kl_total, 1.0 / static_cast<double>(batch));

  Tensor i, f;
  std::vector<Tensor> u;
  if (mode == GateMode::kSample) {
    for (int j = 0; j < 5; ++j) {
      u.push_back(tape.gamma_node(shapes[j], rng.split(kStreamGateBase + j)));
    }
    std::tie(i, f) = gates_5g(tape, u);
  } else {
    std::tie(i, f) = gates_5g(tape, shapes);
  }
  CellState next = finish_beta_step(tape, params, prefix, x_t, state, i, f,
                                    trace, std::move(u), std::move(shapes));
  if (trace) trace->kl = kl_step;
  return next;
}

UnrollResult unroll(CellVariant variant, Tape& tape, const TapeParams& params,
                    const std::vector<Tensor>& inputs,
                    const CellState& initial, const RngStream& rng,
                    const UnrollOptions& opts) {
  if (inputs.empty()) {
    throw UsageError("unroll: sequence length must be at least 1");
  }
  if (variant == CellVariant::kBblstm5gp && !opts.prior.has_value()) {
    throw UsageError("unroll: bblstm5gp requires a prior");
  }
  if (opts.masks && opts.masks->size() != inputs.size()) {
    throw UsageError("unroll: mask length differs from sequence length");
  }
  if (opts.kernel_shapes && opts.kernel_shapes->size() != inputs.size()) {
    throw UsageError("unroll: kernel prior length differs from sequence");
  }
  const std::size_t T = inputs.size();
  const std::int64_t batch = inputs[0].shape()[0];

  UnrollResult result;
  result.states.resize(opts.layers);
  if (opts.collect_traces) result.traces.resize(opts.layers);
  result.outputs.resize(T);

  Tensor kl_sum;
  std::vector<Tensor> layer_inputs = inputs;
  for (int layer = 0; layer < opts.layers; ++layer) {
    const std::string prefix = "layer" + std::to_string(layer) + ".";
    CellState state = initial;
    if (layer > 0) {
      // Upper layers start from fresh zero state of matching width.
      state = CellState{Tensor({batch, initial.c.shape()[1]}, 0.0),
                        Tensor({batch, initial.h.shape()[1]}, 0.0)};
    }
    const RngStream layer_rng = rng.split(1000003ULL * (layer + 1));
    for (std::size_t t = 0; t < T; ++t) {
      const RngStream step_rng = layer_rng.split(t);
      // Always populated: the KL term must flow into kl_sum even when the
      // caller skips trace collection. Trace tensors are handles into the
      // tape, so keeping them is free.
      GateTrace trace_store;
      GateTrace* trace = &trace_store;
      CellState next;
      switch (variant) {
        case CellVariant::kLstm:
          next = step_lstm(tape, params, prefix, layer_inputs[t], state,
                           trace);
          break;
        case CellVariant::kCifg:
          next = step_cifg(tape, params, prefix, layer_inputs[t], state,
                           trace);
          break;
        case CellVariant::kG2Lstm:
          next = step_g2lstm(tape, params, prefix, layer_inputs[t], state,
                             opts.tau, opts.mode, step_rng, trace);
          break;
        case CellVariant::kBlstm:
          next = step_blstm(tape, params, prefix, layer_inputs[t], state,
                            opts.mode, opts.gate_depth, step_rng, trace);
          break;
        case CellVariant::kBblstm3g:
          next = step_bblstm3g(tape, params, prefix, layer_inputs[t], state,
                               opts.mode, opts.gate_depth, step_rng, trace);
          break;
        case CellVariant::kBblstm5g:
          next = step_bblstm5g(tape, params, prefix, layer_inputs[t], state,
                               opts.mode, opts.gate_depth, step_rng, trace);
          break;
        case CellVariant::kBblstm5gp: {
          StepPrior prior = *opts.prior;
          if (opts.kernel_shapes && layer == 0) {
            prior.kernel_shape_g12 = (*opts.kernel_shapes)[t];
          }
          next = step_bblstm5gp(tape, params, prefix, layer_inputs[t], state,
                                opts.mode, opts.gate_depth, step_rng, prior,
                                trace);
          break;
        }
      }
      if (opts.masks) {
        // Freeze state past each sequence's end.
        const Tensor& m = (*opts.masks)[t];
        std::vector<double> inv(m.size());
        for (std::int64_t b = 0; b < m.size(); ++b) {
          inv[b] = 1.0 - m.data()[b];
        }
        Tensor m_inv({batch}, std::move(inv));
        next.c = tape.add(tape.row_mul(next.c, m),
                          tape.row_mul(state.c, m_inv));
        next.h = tape.add(tape.row_mul(next.h, m),
                          tape.row_mul(state.h, m_inv));
      }
      if (trace && trace->kl.defined()) {
        kl_sum = kl_sum.defined() ? tape.add(kl_sum, trace->kl) : trace->kl;
      }
      state = next;
      result.states[layer].push_back(state);
      if (opts.collect_traces) {
        result.traces[layer].push_back(std::move(trace_store));
      }
      if (layer == opts.layers - 1) result.outputs[t] = state.h;
    }
    if (layer + 1 < opts.layers) {
      layer_inputs.clear();
      for (const auto& s : result.states[layer]) layer_inputs.push_back(s.h);
    }
  }
  result.kl_sum = kl_sum.defined() ? kl_sum : Tensor({1}, 0.0);
  return result;
}

}  // namespace betagate
