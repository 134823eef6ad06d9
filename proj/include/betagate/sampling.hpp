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

#ifndef BETAGATE_SAMPLING_HPP_
#define BETAGATE_SAMPLING_HPP_

#include "betagate/rng.hpp"

namespace betagate {

// One reparameterized Gamma(shape, rate 1) draw together with the pathwise
// derivative of the draw with respect to the shape parameter.
struct GammaDraw {
  double shape = 0.0;
  double value = 0.0;
  double pathwise_grad = 0.0;
};

// Implicit-differentiation pathwise derivative du/dalpha of a Gamma(alpha, 1)
// draw u, holding its quantile fixed:
//   du/dalpha = -(dP(alpha, u)/dalpha) / pdf(alpha, u).
// Throws NumericError when the density underflows (pdf < 1e-290), which
// would make the ratio meaningless.
double pathwise_grad_gamma(double shape, double value);

// Marsaglia-Tsang Gamma(shape, rate 1) sampler. For shape < 1 the draw is
// taken at shape + 1 and boosted by U^(1/shape); the pathwise gradient is
// still computed by implicit differentiation at the final value, so it does
// not depend on which sampling route produced the draw. Values are clamped
// to >= 1e-12 to keep downstream gate ratios finite.
GammaDraw sample_gamma(double shape, RngStream& rng);

// Binary concrete (Gumbel-softmax with two categories):
//   sigmoid((logit + g1 - g2) / temperature),
// g1, g2 independent standard Gumbel draws. Differentiable in the logit with
// gradient value * (1 - value) / temperature.
double sample_binary_concrete(double logit, double temperature,
                              RngStream& rng);

// u1 / (u1 + u2): a Beta draw when u1, u2 are independent Gamma draws with
// common rate.
double beta_from_gammas(double u1, double u2);

}  // namespace betagate

#endif  // BETAGATE_SAMPLING_HPP_
