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

#ifndef BETAGATE_OBJECTIVES_HPP_
#define BETAGATE_OBJECTIVES_HPP_

#include <map>
#include <string>
#include <vector>

#include "betagate/checkpoint.hpp"
#include "betagate/tape.hpp"
#include "betagate/tensor.hpp"

namespace betagate {

// Prior over the Gamma gate variables.
struct PriorSpec {
  enum class Mode { kConstant, kFeatureKernel };
  Mode mode = Mode::kConstant;
  double alpha0 = 1.0;  // constant prior shape, all groups
  double beta0 = 1.0;   // constant prior rate
  double lambda = 0.01; // KL weight in the training objective
  // Feature-kernel mode (groups 1-2): initial values of the learnable RBF
  // length-scale and output-scale. The live values are parameters
  // "prior.log_l" / "prior.log_s" (stored in log space to stay positive).
  double kernel_length = 1.0;
  double kernel_scale = 1.0;
};

// Closed-form KL( Gamma(aq, 1) || Gamma(ap, bp) ):
//   (aq-ap) psi(aq) - lnG(aq) + lnG(ap) - ap ln(bp) + aq (bp - 1).
// Nonnegative; zero iff the distributions coincide.
double kl_gamma(double alpha_q, double alpha_p, double beta_p);

// Training objective in minimization form: nll + lambda * kl_sum.
// lambda = 0 recovers pure likelihood training.
double elbo_loss(double nll, double kl_sum, double lambda);
Tensor elbo_loss(Tape& tape, const Tensor& nll, const Tensor& kl_sum,
                 double lambda);

// RBF kernel prior shape for gate groups 1-2:
//   s * exp(-||b_t - b_prev||^2 / (2 l^2)) + shape floor.
double rbf_prior_shape(const std::vector<double>& beta_t,
                       const std::vector<double>& beta_prev, double length,
                       double scale);

// Cross-entropy over a linear head applied to the final hidden state.
// `head_w` is [hidden x classes], `head_b` [classes].
Tensor classification_loss(Tape& tape, const Tensor& h_last,
                           const Tensor& head_w, const Tensor& head_b,
                           const std::vector<int>& labels);

// Bernoulli negative log-likelihood for next-step piano-roll prediction:
// logits [B x 88] and binary targets [B x 88] for one step; summed over
// notes per frame. Weights let the caller average over valid frames and
// sequences. Returns the weighted scalar sum.
Tensor bernoulli_nll_step(Tape& tape, const Tensor& logits,
                          const Tensor& targets, const Tensor& frame_weight);

// Adam optimizer.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update. `grads` maps parameter name to gradient buffer;
  // missing names are treated as zero gradient.
  void step(ParamMap& params,
            const std::map<std::string, std::vector<double>>& grads);

  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Scales gradients in place so their global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_global_norm(std::map<std::string, std::vector<double>>& grads,
                        double max_norm);

}  // namespace betagate

#endif  // BETAGATE_OBJECTIVES_HPP_
