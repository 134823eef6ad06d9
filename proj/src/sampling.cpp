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

#include "betagate/sampling.hpp"

#include <cmath>
#include <sstream>

#include "betagate/error.hpp"
#include "betagate/special_math.hpp"

namespace betagate {

namespace {

constexpr double kValueFloor = 1e-12;

// Marsaglia-Tsang squeeze for shape >= 1.
double sample_gamma_ge1(double shape, RngStream& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double pathwise_grad_gamma(double shape, double value) {
  if (!(shape > 0.0) || !(value > 0.0)) {
    std::ostringstream os;
    os << "pathwise_grad_gamma: invalid arguments (shape=" << shape
       << ", value=" << value << ")";
    throw DomainError(os.str());
  }
  const double pdf = gamma_pdf(shape, value);
  if (pdf < 1e-290) {
    std::ostringstream os;
    os << "pathwise_grad_gamma: density underflow at shape=" << shape
       << ", value=" << value;
    throw NumericError(os.str());
  }
  return -d_reg_lower_gamma_da(shape, value) / pdf;
}

GammaDraw sample_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) {
    std::ostringstream os;
    os << "sample_gamma: shape must be positive, got " << shape;
    throw DomainError(os.str());
  }
  double value;
  if (shape >= 1.0) {
    value = sample_gamma_ge1(shape, rng);
  } else {
    // Boost trick: draw at shape+1, scale by U^(1/shape). The pathwise
    // gradient below is taken by implicit differentiation at the final
    // value, so the boost factor needs no derivative of its own.
    const double boosted = sample_gamma_ge1(shape + 1.0, rng);
    const double u = rng.next_uniform();
    value = boosted * std::pow(u, 1.0 / shape);
  }
  if (value < kValueFloor) value = kValueFloor;
  GammaDraw draw;
  draw.shape = shape;
  draw.value = value;
  draw.pathwise_grad = pathwise_grad_gamma(shape, value);
  return draw;
}

double sample_binary_concrete(double logit, double temperature,
                              RngStream& rng) {
  if (!(temperature > 0.0)) {
    std::ostringstream os;
    os << "sample_binary_concrete: temperature must be positive, got "
       << temperature;
    throw DomainError(os.str());
  }
  const double g1 = rng.next_gumbel();
  const double g2 = rng.next_gumbel();
  const double z = (logit + g1 - g2) / temperature;
  return 1.0 / (1.0 + std::exp(-z));
}

double beta_from_gammas(double u1, double u2) {
  if (!(u1 > 0.0) || !(u2 > 0.0)) {
    std::ostringstream os;
    os << "beta_from_gammas: draws must be positive (u1=" << u1
       << ", u2=" << u2 << ")";
    throw DomainError(os.str());
  }
  return u1 / (u1 + u2);
}

}  // namespace betagate
