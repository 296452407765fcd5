// Copyright 2026 The mmqcels Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MMQCELS_QPE_HPP_
#define MMQCELS_QPE_HPP_

#include <cstdint>
#include <vector>

#include "mmqcels/rng.hpp"
#include "mmqcels/sampling.hpp"
#include "mmqcels/spectrum.hpp"

namespace mmqcels {

struct QpeConfig {
  int ancillas = 8;       // d, 1..24 (exact-distribution mode)
  int repetitions = 10;   // N_rep; estimate = min over draws
};

// Exact d-ancilla phase-estimation outcome distribution for the unitary
// e^{-iH}: Pr(j) = sum_m p_m K_d(j/2^d - lambda_m/(2 pi)) with the Fejer-like
// kernel K_d(x) = sin^2(2^d pi x) / (2^{2d} sin^2(pi x)), K_d(0) = 1.
std::vector<double> qpe_distribution(const Spectrum& spectrum, int ancillas);

// Kernel above with x wrapped to [-1/2, 1/2); exposed for tests.
double qpe_kernel(int ancillas, double x);

struct QpeEstimate {
  double theta = 0.0;          // min over repetitions, phases in [-pi, pi)
  RuntimeLedger ledger;        // t_max = 2^d - 1, t_total = reps * (2^d - 1)
  std::vector<double> draws;   // per-repetition phases
};

// Textbook QPE baseline: `repetitions` inverse-CDF draws from the exact
// distribution, each mapped to 2 pi j / 2^d wrapped to [-pi, pi); the smallest
// draw estimates the bottom dominant eigenvalue.
QpeEstimate qpe_estimate_min(const Spectrum& spectrum, const QpeConfig& config,
                             std::uint64_t seed);

}  // namespace mmqcels

#endif  // MMQCELS_QPE_HPP_
