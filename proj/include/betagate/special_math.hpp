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

#ifndef BETAGATE_SPECIAL_MATH_HPP_
#define BETAGATE_SPECIAL_MATH_HPP_

// Scalar special functions backing Gamma sampling, pathwise gradients and
// the Gamma KL term. Everything here is computed in double precision:
// pathwise gradients divide a CDF derivative by the density, which amplifies
// CDF error wherever the density is small.
//
// All functions are pure and thread-safe.

namespace betagate {

// ln Gamma(x) for x > 0. Throws DomainError for x <= 0.
double log_gamma(double x);

// psi(x) = d/dx ln Gamma(x) for x > 0. Throws DomainError for x <= 0.
double digamma(double x);

// psi'(x), the derivative of digamma, for x > 0. Needed by the backward
// pass of the Gamma KL. Throws DomainError for x <= 0.
double trigamma(double x);

// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a),
// the CDF of Gamma(a, rate 1). Series for x < a + 1, Lentz continued
// fraction otherwise; both iterate to 1e-14 with a cap of 500 terms and
// throw NumericError on non-convergence rather than return a stale value.
// Throws DomainError for a <= 0 or x < 0.
double reg_lower_gamma(double a, double x);

// dP(a, x)/da, the shape-derivative of the Gamma CDF. Fourth-order central
// difference of reg_lower_gamma with step max(1e-5, 1e-5*a).
double d_reg_lower_gamma_da(double a, double x);

// Gamma(a, rate 1) density at x > 0, evaluated in log space.
double gamma_pdf(double a, double x);

}  // namespace betagate

#endif  // BETAGATE_SPECIAL_MATH_HPP_
