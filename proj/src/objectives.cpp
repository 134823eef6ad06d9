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

#include "betagate/objectives.hpp"

#include <cmath>

#include "betagate/cells.hpp"
#include "betagate/error.hpp"
#include "betagate/special_math.hpp"

namespace betagate {

double kl_gamma(double alpha_q, double alpha_p, double beta_p) {
  if (!(alpha_q > 0.0) || !(alpha_p > 0.0) || !(beta_p > 0.0)) {
    throw DomainError("kl_gamma: all arguments must be positive");
  }
  return (alpha_q - alpha_p) * digamma(alpha_q) - log_gamma(alpha_q) +
         log_gamma(alpha_p) - alpha_p * std::log(beta_p) +
         alpha_q * (beta_p - 1.0);
}

double elbo_loss(double nll, double kl_sum, double lambda) {
  if (lambda < 0.0) throw DomainError("elbo_loss: lambda must be >= 0");
  return nll + lambda * kl_sum;
}

Tensor elbo_loss(Tape& tape, const Tensor& nll, const Tensor& kl_sum,
                 double lambda) {
  if (lambda < 0.0) throw DomainError("elbo_loss: lambda must be >= 0");
  if (lambda == 0.0) return nll;
  return tape.add(nll, tape.scale(kl_sum, lambda));
}

double rbf_prior_shape(const std::vector<double>& beta_t,
                       const std::vector<double>& beta_prev, double length,
                       double scale) {
  if (beta_t.size() != beta_prev.size()) {
    throw UsageError("rbf_prior_shape: feature vectors differ in length");
  }
  if (!(length > 0.0) || !(scale > 0.0)) {
    throw DomainError("rbf_prior_shape: length and scale must be positive");
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < beta_t.size(); ++i) {
    const double d = beta_t[i] - beta_prev[i];
    d2 += d * d;
  }
  return scale * std::exp(-d2 / (2.0 * length * length)) + kShapeFloor;
}

Tensor classification_loss(Tape& tape, const Tensor& h_last,
                           const Tensor& head_w, const Tensor& head_b,
                           const std::vector<int>& labels) {
  Tensor logits = tape.add(tape.matmul(h_last, head_w), head_b);
  return tape.softmax_cross_entropy(logits, labels);
}

Tensor bernoulli_nll_step(Tape& tape, const Tensor& logits,
                          const Tensor& targets, const Tensor& frame_weight) {
  for (double t : targets.data()) {
    if (t != 0.0 && t != 1.0) {
      throw UsageError("bernoulli_nll_step: targets must be binary");
    }
  }
  // -[y ln p + (1-y) ln(1-p)] with p = sigmoid(z) is softplus(z) - y z.
  Tensor per_note = tape.sub(tape.softplus(logits), tape.mul(targets, logits));
  Tensor per_frame = tape.row_sum(per_note);
  return tape.sum(tape.mul(per_frame, frame_weight));
}

void Adam::step(ParamMap& params,
                const std::map<std::string, std::vector<double>>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, tensor] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const auto& g = git->second;
    if (g.size() != static_cast<std::size_t>(tensor.size())) {
      throw UsageError("Adam: gradient size mismatch for " + name);
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    auto& w = tensor.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

double clip_global_norm(std::map<std::string, std::vector<double>>& grads,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g) x *= s;
    }
  }
  return norm;
}

}  // namespace betagate
