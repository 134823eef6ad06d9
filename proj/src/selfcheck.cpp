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

#include "betagate/selfcheck.hpp"

#include <cmath>

#include <json.hpp>

#include "betagate/cells.hpp"
#include "betagate/diagnostics.hpp"
#include "betagate/objectives.hpp"
#include "betagate/rng.hpp"
#include "betagate/sampling.hpp"
#include "betagate/special_math.hpp"
#include "betagate/tape.hpp"

namespace betagate {

namespace {

class Harness {
 public:
  void le(const std::string& name, double measured, double threshold) {
    add(name, measured, threshold, "<=", measured <= threshold);
  }
  void ge(const std::string& name, double measured, double threshold) {
    add(name, measured, threshold, ">=", measured >= threshold);
  }
  SelfCheckReport finish() {
    report_.all_pass = true;
    for (const auto& r : report_.results) report_.all_pass &= r.pass;
    return report_;
  }

 private:
  void add(const std::string& name, double measured, double threshold,
           const char* rel, bool pass) {
    report_.results.push_back({name, measured, threshold, rel, pass});
  }
  SelfCheckReport report_;
};

double quantile_bisect(double a, double p) {
  double lo = 0.0, hi = 50.0 * a + 50.0;
  for (int i = 0; i < 120; ++i) {
    const double mid = 0.5 * (lo + hi);
    (reg_lower_gamma(a, mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SelfCheckReport run_selfcheck(const SelfCheckOptions& opts) {
  Harness h;

  // ---- special functions ----
  h.le("log_gamma(5) = ln 24", std::fabs(log_gamma(5.0) - std::log(24.0)),
       1e-10);
  h.le("log_gamma(0.5) = ln sqrt(pi)",
       std::fabs(log_gamma(0.5) - 0.5 * std::log(M_PI)), 1e-10);
  {
    double worst = 0.0;
    for (double x : {0.01, 0.7, 3.0, 40.0, 500.0}) {
      worst = std::fmax(worst, std::fabs(log_gamma(x + 1.0) - log_gamma(x) -
                                         std::log(x)));
    }
    h.le("log_gamma recurrence residual", worst, 1e-9);
  }
  h.le("digamma(1) = -euler_gamma",
       std::fabs(digamma(1.0) + 0.57721566490153286), 1e-9);
  {
    double worst = 0.0;
    for (double x : {0.1, 1.5, 12.0}) {
      worst = std::fmax(worst,
                        std::fabs(digamma(x + 1.0) - digamma(x) - 1.0 / x));
    }
    h.le("digamma recurrence residual", worst, 1e-9);
  }
  {
    double worst = 0.0;
    for (double x : {0.2, 1.0, 3.0, 9.0}) {
      worst = std::fmax(worst, std::fabs(reg_lower_gamma(1.0, x) -
                                         (1.0 - std::exp(-x))));
    }
    h.le("P(1,x) equals exponential CDF", worst, 1e-10);
  }
  {
    // monotone in x
    double prev = -1.0;
    bool mono = true;
    for (int i = 0; i <= 50; ++i) {
      const double p = reg_lower_gamma(2.5, 0.3 * i);
      mono &= p >= prev;
      prev = p;
    }
    h.ge("P(a,.) monotone in x", mono ? 1.0 : 0.0, 1.0);
  }
  {
    double worst = 0.0;
    for (double a : {0.5, 2.0, 8.0}) {
      for (double q : {0.25, 0.5, 0.75}) {
        const double x = quantile_bisect(a, q);
        const double hh = std::fmax(1e-4, 1e-4 * a);
        const double d1 =
            (reg_lower_gamma(a + hh, x) - reg_lower_gamma(a - hh, x)) /
            (2.0 * hh);
        const double d2 = (reg_lower_gamma(a + hh / 2.0, x) -
                           reg_lower_gamma(a - hh / 2.0, x)) /
                          hh;
        const double oracle = d2 + (d2 - d1) / 3.0;
        worst = std::fmax(worst,
                          std::fabs(d_reg_lower_gamma_da(a, x) - oracle) /
                              std::fabs(oracle));
      }
    }
    h.le("dP/da vs Richardson oracle (rel)", worst, 1e-6);
  }

  // ---- sampler statistics ----
  {
    RngStream rng(1001, 0);
    const int n = 20000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      double v = sample_gamma(2.0, rng).value;
      if (opts.fault_shift_gamma_mean) v *= 1.1;
      mean += v;
    }
    mean /= n;
    h.le("gamma sampler mean error at shape 2", std::fabs(mean - 2.0),
         3.0 * std::sqrt(2.0 / n));
  }
  {
    RngStream rng(1002, 0);
    const int n = 20000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = sample_gamma(0.5, rng).value;
      s += v;
      s2 += v * v;
    }
    const double var = (s2 - s * s / n) / (n - 1);
    h.le("gamma sampler variance error at shape 0.5", std::fabs(var - 0.5),
         0.03);
  }
  {
    RngStream rng(1003, 0);
    const int n = 20000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = sample_gamma(1.0, rng).value;
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = 1.0 - std::exp(-xs[i]);
      d = std::fmax(d, std::fabs(c - static_cast<double>(i) / n));
      d = std::fmax(d, std::fabs(static_cast<double>(i + 1) / n - c));
    }
    h.le("gamma KS vs exponential at shape 1", d,
         std::sqrt(std::log(2.0 / 0.001) / 2.0) / std::sqrt(n));
  }
  {
    // quantile uniformity across shapes
    RngStream rng(1004, 0);
    const int n = 20000;
    std::vector<double> q(n);
    for (auto& v : q) v = reg_lower_gamma(0.7, sample_gamma(0.7, rng).value);
    std::sort(q.begin(), q.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      d = std::fmax(d, std::fabs(q[i] - static_cast<double>(i) / n));
      d = std::fmax(d, std::fabs(static_cast<double>(i + 1) / n - q[i]));
    }
    h.le("gamma quantiles uniform (KS)", d,
         std::sqrt(std::log(2.0 / 0.001) / 2.0) / std::sqrt(n));
  }
  {
    double worst = 0.0;
    for (double a : {0.5, 1.0, 2.0, 8.0}) {
      for (double p : {0.1, 0.5, 0.9}) {
        const double x = quantile_bisect(a, p);
        const double eps = 1e-4;
        const double oracle =
            (quantile_bisect(a + eps, p) - quantile_bisect(a - eps, p)) /
            (2.0 * eps);
        worst = std::fmax(worst, std::fabs(pathwise_grad_gamma(a, x) - oracle) /
                                     std::fabs(oracle));
      }
    }
    h.le("pathwise gradient vs inverse-CDF oracle (rel)", worst, 1e-2);
  }
  {
    RngStream rng(1005, 0);
    const int n = 20000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      mean += sample_binary_concrete(0.0, 1.0, rng);
    }
    h.le("binary concrete symmetric mean error", std::fabs(mean / n - 0.5),
         0.01);
  }
  {
    RngStream rng(1006, 0);
    const int n = 50000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u1 = sample_gamma(2.0, rng).value;
      const double u2 = sample_gamma(3.0, rng).value;
      mean += beta_from_gammas(u1, u2);
    }
    h.le("Beta(2,3) ratio mean error", std::fabs(mean / n - 0.4), 0.004);
  }

  // ---- tape gradients ----
  {
    Tape tape;
    Tensor x = tape.leaf(Tensor({1}, {0.0}));
    Tensor loss = tape.sum(tape.sigmoid(x));
    tape.backward(loss);
    h.le("sigmoid gradient at 0", std::fabs(tape.grad(x)[0] - 0.25), 1e-12);
  }
  {
    // two-layer tanh net, one finite-difference probe
    RngStream rng(1007, 0);
    Tensor w1({3, 4}, 0.0);
    for (auto& v : w1.mutable_data()) v = rng.next_uniform() - 0.5;
    Tensor w2({4, 1}, 0.0);
    for (auto& v : w2.mutable_data()) v = rng.next_uniform() - 0.5;
    Tensor x({2, 3}, {0.2, -0.4, 0.6, -0.1, 0.5, 0.3});
    Tape tape;
    Tensor leaf = tape.leaf(w1);
    Tensor loss =
        tape.mean(tape.tanh(tape.matmul(tape.tanh(tape.matmul(x, leaf)),
                                        w2)));
    tape.backward(loss);
    const double got = tape.grad(leaf)[5];
    const double hh = 1e-6;
    const double keep = w1.mutable_data()[5];
    w1.mutable_data()[5] = keep + hh;
    Tape tp;
    const double up =
        tp.mean(tp.tanh(tp.matmul(tp.tanh(tp.matmul(x, tp.leaf(w1))), w2)))
            .data()[0];
    w1.mutable_data()[5] = keep - hh;
    Tape tm;
    const double dn =
        tm.mean(tm.tanh(tm.matmul(tm.tanh(tm.matmul(x, tm.leaf(w1))), w2)))
            .data()[0];
    w1.mutable_data()[5] = keep;
    const double want = (up - dn) / (2.0 * hh);
    h.le("two-layer net gradient vs fd (rel)",
         std::fabs(got - want) / std::fmax(1e-12, std::fabs(want)), 1e-4);
  }
  {
    // stochastic gamma node: reparameterized gradient of the mean is 1
    Tape tape;
    RngStream rng(1008, 0);
    Tensor shapes = tape.leaf(Tensor({20000, 1}, 1.5));
    Tensor loss = tape.mean(tape.gamma_node(shapes, rng));
    tape.backward(loss);
    double total = 0.0;
    for (double g : tape.grad(shapes)) total += g;
    h.le("gamma node mean-gradient error", std::fabs(total - 1.0), 0.02);
  }
  {
    // determinism: identical seeds, bit-identical loss
    auto run = [](std::uint64_t seed) {
      Tape tape;
      RngStream rng(seed, 3);
      Tensor shapes = tape.leaf(Tensor({16, 4}, 1.2));
      Tensor loss = tape.mean(tape.sigmoid(tape.gamma_node(shapes, rng)));
      return loss.data()[0];
    };
    h.le("tape replay determinism", std::fabs(run(42) - run(42)), 0.0);
  }

  // ---- KL ----
  h.le("KL zero at equality", std::fabs(kl_gamma(1.7, 1.7, 1.0)), 1e-12);
  h.le("KL(2,1,1) = psi(2)", std::fabs(kl_gamma(2.0, 1.0, 1.0) - digamma(2.0)),
       1e-12);
  {
    // closed form vs quadrature at a few grid points; the x = e^u
    // substitution damps both endpoints exponentially
    double worst = 0.0;
    for (double aq : {0.5, 2.0}) {
      for (double bp : {0.5, 2.0}) {
        const double ap = 1.0;
        auto integrand = [aq, ap, bp](double u) {
          const double x = std::exp(u);
          const double lq = (aq - 1.0) * u - x - log_gamma(aq);
          const double lp = ap * std::log(bp) + (ap - 1.0) * u - bp * x -
                            log_gamma(ap);
          return x * std::exp(lq) * (lq - lp);
        };
        double quad = 0.0;
        const int steps = 200000;
        const double lo = -45.0, hi = std::log(aq + 60.0);
        double prev = integrand(lo);
        for (int i = 1; i <= steps; ++i) {
          const double u = lo + (hi - lo) * i / steps;
          const double f = integrand(u);
          quad += 0.5 * (prev + f) * ((hi - lo) / steps);
          prev = f;
        }
        worst = std::fmax(worst, std::fabs(kl_gamma(aq, ap, bp) - quad));
      }
    }
    h.le("KL closed form vs quadrature", worst, 1e-5);
  }

  // ---- gate invariants ----
  {
    CellDims dims{3, 4, 1};
    ParamMap params = init_cell_params(CellVariant::kCifg, dims,
                                       RngStream(1009, 0), "layer0.");
    Tape tape;
    TapeParams on_tape(tape, params);
    Tensor x({2, 3}, 0.3);
    CellState state{Tensor({2, 4}, 0.1), Tensor({2, 4}, -0.2)};
    GateTrace trace;
    step_cifg(tape, on_tape, "layer0.", x, state, &trace);
    double worst = 0.0;
    for (std::int64_t i = 0; i < trace.i.size(); ++i) {
      worst = std::fmax(worst, std::fabs(trace.i.data()[i] +
                                         trace.f.data()[i] - 1.0));
    }
    h.le("CIFG coupling i+f=1", worst, 0.0);
  }
  {
    const auto blstm = gate_correlation({1.2, 0.8, 1.5, 1.1}, 10000,
                                        RngStream(1010, 0));
    h.le("BLSTM |rho| within 3 standard errors", std::fabs(blstm.rho),
         3.0 * blstm.std_error);
    const auto g3 = gate_correlation({1.0, 1.0, 1.0}, 10000,
                                     RngStream(1011, 0));
    h.ge("3G rho nonnegative (within 3 SE)", g3.rho, -3.0 * g3.std_error);
    const auto neg = gate_correlation({0.1, 0.1, 2.0, 2.0, 0.1}, 10000,
                                      RngStream(1012, 0));
    h.le("5G fixture reaches rho <= -0.2", neg.rho, -0.2);
    const auto pos = gate_correlation({8.0, 8.0, 0.1, 0.1, 0.5}, 10000,
                                      RngStream(1013, 0));
    h.ge("5G fixture reaches rho >= +0.2", pos.rho, 0.2);
  }
  {
    // gates bounded in (0,1) across variants
    CellDims dims{3, 4, 1};
    double worst = 0.0;
    for (CellVariant variant :
         {CellVariant::kLstm, CellVariant::kG2Lstm, CellVariant::kBlstm,
          CellVariant::kBblstm3g, CellVariant::kBblstm5g}) {
      ParamMap params = init_cell_params(variant, dims, RngStream(1014, 0),
                                         "layer0.");
      Tape tape;
      TapeParams on_tape(tape, params);
      std::vector<Tensor> inputs = {Tensor({4, 3}, 0.4),
                                    Tensor({4, 3}, -0.2)};
      CellState init{Tensor({4, 4}, 0.0), Tensor({4, 4}, 0.0)};
      UnrollOptions uopts;
      uopts.tau = 0.5;
      UnrollResult run = unroll(variant, tape, on_tape, inputs, init,
                                RngStream(1015, 0), uopts);
      for (const auto& trace : run.traces[0]) {
        for (const Tensor* g : {&trace.i, &trace.f, &trace.o}) {
          for (std::int64_t i = 0; i < g->size(); ++i) {
            const double v = g->data()[i];
            worst = std::fmax(worst, std::fmax(-v, v - 1.0));
          }
        }
      }
    }
    h.le("all gate values inside (0,1)", worst, 0.0);
  }
  h.le("elbo arithmetic", std::fabs(elbo_loss(2.0, 0.5, 0.1) - 2.05), 1e-15);
  {
    ParamMap params;
    params.emplace("w", Tensor({2}, {1.0, 2.0}));
    Adam adam;
    std::map<std::string, std::vector<double>> grads;
    grads["w"] = {0.0, 0.0};
    adam.step(params, grads);
    h.le("adam zero-gradient no-op",
         std::fabs(params.at("w").data()[0] - 1.0) +
             std::fabs(params.at("w").data()[1] - 2.0),
         0.0);
  }

  return h.finish();
}

std::string selfcheck_report_json(const SelfCheckReport& report) {
  nlohmann::json doc;
  doc["all_pass"] = report.all_pass;
  doc["properties"] = nlohmann::json::array();
  for (const auto& r : report.results) {
    nlohmann::json row;
    row["name"] = r.name;
    row["measured"] = r.measured;
    row["threshold"] = r.threshold;
    row["relation"] = r.relation;
    row["pass"] = r.pass;
    doc["properties"].push_back(std::move(row));
  }
  return doc.dump(2);
}

}  // namespace betagate
