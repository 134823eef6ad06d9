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

#include "betagate/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "betagate/data.hpp"
#include "betagate/error.hpp"
#include "betagate/objectives.hpp"
#include "betagate/sampling.hpp"

namespace betagate {

namespace {

void bin_values(const Tensor& gate, std::vector<HistogramRow>& rows) {
  const int bins = static_cast<int>(rows.size());
  for (std::int64_t k = 0; k < gate.size(); ++k) {
    int b = static_cast<int>(gate.data()[k] * bins);
    b = std::clamp(b, 0, bins - 1);
    ++rows[b].count;
  }
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(12);
  return out;
}

std::pair<double, double> gates_from_draws(const std::vector<double>& u) {
  switch (u.size()) {
    case 4:
      return {u[0] / (u[0] + u[1]), u[2] / (u[2] + u[3])};
    case 3:
      return {u[0] / (u[0] + u[2]), u[1] / (u[1] + u[2])};
    case 5:
      return {(u[0] + u[2]) / (u[0] + u[2] + u[3] + u[4]),
              (u[1] + u[3]) / (u[1] + u[2] + u[3] + u[4])};
    default:
      throw UsageError("gate_correlation: shape vector must have 3, 4 or 5 "
                       "entries");
  }
}

}  // namespace

GateHistogram gate_histogram(const std::vector<GateTrace>& traces, int bins) {
  if (bins < 2) throw UsageError("gate_histogram: need at least 2 bins");
  if (traces.empty()) throw UsageError("gate_histogram: empty traces");
  GateHistogram hist;
  for (auto* rows : {&hist.input, &hist.forget, &hist.output}) {
    rows->resize(bins);
    for (int b = 0; b < bins; ++b) {
      (*rows)[b].lo = static_cast<double>(b) / bins;
      (*rows)[b].hi = static_cast<double>(b + 1) / bins;
    }
  }
  for (const auto& trace : traces) {
    bin_values(trace.i, hist.input);
    bin_values(trace.f, hist.forget);
    bin_values(trace.o, hist.output);
  }
  return hist;
}

void write_histogram_csv(const std::string& path, const GateHistogram& hist) {
  auto out = open_csv(path);
  out << "gate,bin_left,bin_right,count\n";
  const char* names[3] = {"input", "forget", "output"};
  const std::vector<HistogramRow>* rows[3] = {&hist.input, &hist.forget,
                                              &hist.output};
  for (int g = 0; g < 3; ++g) {
    for (const auto& row : *rows[g]) {
      out << names[g] << "," << row.lo << "," << row.hi << "," << row.count
          << "\n";
    }
  }
}

CorrelationReport gate_correlation(const std::vector<double>& shapes,
                                   std::int64_t draws, RngStream rng) {
  if (draws < 1000) {
    throw UsageError("gate_correlation: need at least 1000 draws");
  }
  std::vector<double> is, fs;
  is.reserve(draws);
  fs.reserve(draws);
  std::vector<double> u(shapes.size());
  for (std::int64_t k = 0; k < draws; ++k) {
    for (std::size_t j = 0; j < shapes.size(); ++j) {
      u[j] = sample_gamma(shapes[j], rng).value;
    }
    const auto [i, f] = gates_from_draws(u);
    is.push_back(i);
    fs.push_back(f);
  }
  const double n = static_cast<double>(draws);
  double mi = std::accumulate(is.begin(), is.end(), 0.0) / n;
  double mf = std::accumulate(fs.begin(), fs.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::int64_t k = 0; k < draws; ++k) {
    sxy += (is[k] - mi) * (fs[k] - mf);
    sxx += (is[k] - mi) * (is[k] - mi);
    syy += (fs[k] - mf) * (fs[k] - mf);
  }
  CorrelationReport report;
  report.draws = draws;
  if (sxx <= 0.0 || syy <= 0.0) {
    report.defined = false;
    return report;
  }
  report.rho = sxy / std::sqrt(sxx * syy);
  report.std_error = (1.0 - report.rho * report.rho) / std::sqrt(n);
  return report;
}

void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationReport>& reports) {
  auto out = open_csv(path);
  out << "index,rho,std_error,draws,defined\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    out << k << "," << r.rho << "," << r.std_error << "," << r.draws << ","
        << (r.defined ? 1 : 0) << "\n";
  }
}

CorrelationSweep correlation_sweep_5g(int configs, std::int64_t draws,
                                      RngStream rng) {
  CorrelationSweep sweep;
  const double lo = std::log(0.05), hi = std::log(20.0);
  for (int c = 0; c < configs; ++c) {
    std::vector<double> shapes(5);
    for (auto& s : shapes) {
      s = std::exp(lo + (hi - lo) * rng.next_uniform());
    }
    const CorrelationReport report =
        gate_correlation(shapes, draws, rng.split(1000 + c));
    if (!report.defined) continue;
    if (report.rho < sweep.min_rho) {
      sweep.min_rho = report.rho;
      std::copy(shapes.begin(), shapes.end(),
                sweep.most_negative_config.begin());
    }
    if (report.rho > sweep.max_rho) {
      sweep.max_rho = report.rho;
      std::copy(shapes.begin(), shapes.end(),
                sweep.most_positive_config.begin());
    }
  }
  return sweep;
}

std::vector<double> gradient_norm_trace(Tape& tape, const UnrollResult& run,
                                        const Tensor& loss, int layer) {
  if (layer < 0 || layer >= static_cast<int>(run.states.size()) ||
      run.states[layer].empty()) {
    throw UsageError("gradient_norm_trace: no cell states for layer " +
                     std::to_string(layer));
  }
  tape.backward(loss);
  std::vector<double> norms;
  norms.reserve(run.states[layer].size());
  for (const auto& state : run.states[layer]) {
    const auto& g = tape.grad(state.c);
    const std::int64_t batch = state.c.shape()[0];
    const std::int64_t hidden = state.c.shape()[1];
    double mean_norm = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
      double sq = 0.0;
      for (std::int64_t h = 0; h < hidden; ++h) {
        const double v = g[b * hidden + h];
        sq += v * v;
      }
      mean_norm += std::sqrt(sq);
    }
    norms.push_back(mean_norm / static_cast<double>(batch));
  }
  return norms;
}

void write_gradnorm_csv(const std::string& path,
                        const std::vector<double>& norms) {
  auto out = open_csv(path);
  out << "t,norm\n";
  for (std::size_t t = 0; t < norms.size(); ++t) {
    out << t << "," << norms[t] << "\n";
  }
}

double proposition1_s0(double delta) {
  return -(36125.0 * delta * delta + 107780.0 * delta - 214200.0) /
         (38880.0 * (4.0 - delta) * (4.0 - delta));
}

double proposition1_s1(double delta) {
  return -(36125.0 * delta * delta - 107780.0 * delta - 214200.0) /
         (38880.0 * (4.0 + delta) * (4.0 + delta));
}

std::vector<PropositionReport> verify_proposition1(
    const std::vector<double>& deltas, std::int64_t n_draws, RngStream rng) {
  std::vector<PropositionReport> reports;
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    const double delta = deltas[d];
    if (!(delta > 0.0)) {
      throw DomainError("verify_proposition1: delta must be positive");
    }
    PropositionReport report;
    report.delta = delta;
    report.s0 = proposition1_s0(delta);
    report.s1 = proposition1_s1(delta);
    report.upper = delta <= kProp1BranchDelta ? report.s1 : kProp1UpperConst;

    // Rejection sampling into the band |u - 0.5| <= delta/2, with an
    // acceptance-rate guard so a too-narrow band cannot silently bias the
    // estimate.
    RngStream stream = rng.split(d);
    const double band_lo = 0.5 * (1.0 - delta), band_hi = 0.5 * (1.0 + delta);
    const std::int64_t max_attempts = n_draws * 10000;
    std::int64_t attempts = 0, inside = 0;
    double mean = 0.0;
    std::int64_t accepted = 0;
    while (accepted < n_draws && attempts < max_attempts) {
      ++attempts;
      const double u = sample_gamma(0.5, stream).value;
      if (u < band_lo || u > band_hi) continue;
      ++accepted;
      // d i / d u1 = (u4+u5)/den^2 = 1/(u1+1.5)^2 at u_{3:5} = 0.5
      const double du = 1.0 / ((u + 1.5) * (u + 1.5));
      const double derivative = du * pathwise_grad_gamma(0.5, u);
      mean += derivative;
      if (derivative >= report.s0 && derivative <= report.upper) ++inside;
    }
    report.draws = accepted;
    report.sampling_failed = accepted < n_draws;
    if (accepted > 0) {
      report.mean_derivative = mean / static_cast<double>(accepted);
      report.containment_rate =
          static_cast<double>(inside) / static_cast<double>(accepted);
    }
    reports.push_back(report);
  }
  return reports;
}

void write_proposition_csv(const std::string& path,
                           const std::vector<PropositionReport>& reports) {
  auto out = open_csv(path);
  out << "delta,s0,s1,upper,containment_rate,mean_derivative,draws,"
         "sampling_failed\n";
  for (const auto& r : reports) {
    out << r.delta << "," << r.s0 << "," << r.s1 << "," << r.upper << ","
        << r.containment_rate << "," << r.mean_derivative << "," << r.draws
        << "," << (r.sampling_failed ? 1 : 0) << "\n";
  }
}

SyntheticDemoResult synthetic_correlation_demo(
    const SyntheticDemoConfig& cfg) {
  const ClassificationData data = make_two_regime_dataset(
      cfg.sequences, cfg.seq_len, cfg.values, cfg.seed);
  const std::int64_t input_dim = data.vocab;  // one-hot tokens
  const CellDims dims{input_dim, cfg.hidden, 1};

  ParamMap params = init_cell_params(CellVariant::kBblstm5g, dims,
                                     RngStream(cfg.seed, 1), "layer0.");
  {
    RngStream head_rng(cfg.seed, 2);
    std::vector<double> w(cfg.hidden * data.classes);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (auto& v : w) v = bound * (2.0 * head_rng.next_uniform() - 1.0);
    params.emplace("head.W", Tensor({cfg.hidden, data.classes}, std::move(w)));
    params.emplace("head.b", Tensor({data.classes}, 0.0));
  }

  auto one_hot_inputs = [&](const std::vector<std::size_t>& idx) {
    const std::int64_t batch = static_cast<std::int64_t>(idx.size());
    std::vector<Tensor> inputs;
    for (int t = 0; t < cfg.seq_len; ++t) {
      std::vector<double> v(batch * input_dim, 0.0);
      for (std::int64_t b = 0; b < batch; ++b) {
        v[b * input_dim + data.items[idx[b]].tokens[t]] = 1.0;
      }
      inputs.push_back(Tensor({batch, input_dim}, std::move(v)));
    }
    return inputs;
  };
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(data.items[i].label);
    return labels;
  };

  auto accuracy = [&]() {
    // deterministic mean-mode evaluation over the training set
    std::vector<std::size_t> idx(data.items.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto inputs = one_hot_inputs(idx);
    Tape tape;
    TapeParams on_tape(tape, params);
    const std::int64_t batch = static_cast<std::int64_t>(idx.size());
    CellState init{Tensor({batch, cfg.hidden}, 0.0),
                   Tensor({batch, cfg.hidden}, 0.0)};
    UnrollOptions opts;
    opts.mode = GateMode::kMean;
    opts.collect_traces = false;
    UnrollResult run = unroll(CellVariant::kBblstm5g, tape, on_tape, inputs,
                              init, RngStream(0, 0), opts);
    Tensor logits = tape.add(
        tape.matmul(run.outputs.back(), on_tape.get("head.W")),
        on_tape.get("head.b"));
    const auto want = labels_of(idx);
    std::int64_t correct = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
      int arg = 0;
      for (int c = 1; c < data.classes; ++c) {
        if (logits.at(b, c) > logits.at(b, arg)) arg = c;
      }
      correct += (arg == want[b]);
    }
    return static_cast<double>(correct) / static_cast<double>(batch);
  };

  SyntheticDemoResult result;
  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  RngStream shuffle_rng(cfg.seed, 3);
  RngStream noise_rng(cfg.seed, 4);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order =
        shuffled_indices(data.items.size(), shuffle_rng.split(epoch));
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::vector<std::size_t> idx(order.begin() + start,
                                         order.begin() + stop);
      const auto inputs = one_hot_inputs(idx);
      Tape tape;
      TapeParams on_tape(tape, params);
      const std::int64_t batch = static_cast<std::int64_t>(idx.size());
      CellState init{Tensor({batch, cfg.hidden}, 0.0),
                     Tensor({batch, cfg.hidden}, 0.0)};
      UnrollOptions opts;
      opts.collect_traces = false;
      UnrollResult run =
          unroll(CellVariant::kBblstm5g, tape, on_tape, inputs, init,
                 noise_rng.split(epoch * 100000 + start), opts);
      Tensor loss =
          classification_loss(tape, run.outputs.back(), on_tape.get("head.W"),
                              on_tape.get("head.b"), labels_of(idx));
      tape.backward(loss);
      std::map<std::string, std::vector<double>> grads;
      for (const auto& [name, tensor] : on_tape.map()) {
        grads[name] = tape.grad(tensor);
      }
      clip_global_norm(grads, 5.0);
      adam.step(params, grads);
    }
    result.epochs_run = epoch;
    result.train_accuracy = accuracy();
    if (result.train_accuracy >= cfg.target_accuracy) break;
  }

  // Per-timestep, per-regime gate statistics on a fresh evaluation slice:
  // shapes inferred in mean mode define the gate distribution at each site;
  // correlation is Monte-Carlo at the batch-averaged shapes per group.
  const std::size_t eval_count = std::min<std::size_t>(64, data.items.size());
  std::vector<std::size_t> eval_idx(eval_count);
  std::iota(eval_idx.begin(), eval_idx.end(), 0);
  const auto inputs = one_hot_inputs(eval_idx);
  Tape tape;
  TapeParams on_tape(tape, params);
  const std::int64_t batch = static_cast<std::int64_t>(eval_count);
  CellState init{Tensor({batch, cfg.hidden}, 0.0),
                 Tensor({batch, cfg.hidden}, 0.0)};
  UnrollOptions opts;
  opts.mode = GateMode::kMean;
  UnrollResult run = unroll(CellVariant::kBblstm5g, tape, on_tape, inputs,
                            init, RngStream(0, 0), opts);
  RngStream mc_rng(cfg.seed, 5);
  for (int t = 0; t < cfg.seq_len; ++t) {
    const GateTrace& trace = run.traces[0][t];
    for (int regime = 0; regime <= 1; ++regime) {
      // batch rows whose token at t carries this regime bit
      std::vector<std::int64_t> members;
      for (std::int64_t b = 0; b < batch; ++b) {
        const int tok = data.items[eval_idx[b]].tokens[t];
        if ((tok >= cfg.values) == (regime == 1)) members.push_back(b);
      }
      if (members.empty()) continue;
      SyntheticDemoRow row;
      row.t = t;
      row.regime = regime;
      const std::int64_t hidden = cfg.hidden;
      std::vector<double> shape_means(5, 0.0);
      for (std::int64_t b : members) {
        for (std::int64_t h = 0; h < hidden; ++h) {
          row.mean_i += trace.i.at(b, h);
          row.mean_f += trace.f.at(b, h);
          for (int j = 0; j < 5; ++j) {
            shape_means[j] += trace.shapes[j].at(b, h);
          }
        }
      }
      const double denom = static_cast<double>(members.size() * hidden);
      row.mean_i /= denom;
      row.mean_f /= denom;
      for (auto& s : shape_means) s /= denom;
      const CorrelationReport corr = gate_correlation(
          shape_means, cfg.corr_draws, mc_rng.split(t * 2 + regime));
      row.rho = corr.defined ? corr.rho : 0.0;
      result.rows.push_back(row);
    }
  }
  return result;
}

void write_synthetic_demo_csv(const std::string& path,
                              const SyntheticDemoResult& result) {
  auto out = open_csv(path);
  out << "t,regime,mean_i,mean_f,rho\n";
  for (const auto& row : result.rows) {
    out << row.t << "," << row.regime << "," << row.mean_i << ","
        << row.mean_f << "," << row.rho << "\n";
  }
}

}  // namespace betagate
