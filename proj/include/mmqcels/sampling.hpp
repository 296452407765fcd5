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

#ifndef MMQCELS_SAMPLING_HPP_
#define MMQCELS_SAMPLING_HPP_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "mmqcels/rng.hpp"
#include "mmqcels/spectrum.hpp"

namespace mmqcels {

// Truncated Gaussian time density
//   a_T(t) = exp(-t^2 / (2 T^2)) / (A_gamma sqrt(2 pi) T)  on [-gamma*T, gamma*T],
// where mass = A_gamma = erf(gamma/sqrt(2)) is the kept Gaussian mass.
struct TimeDensity {
  double T = 1.0;
  double gamma = 1.0;
  double mass = 1.0;
};

TimeDensity make_time_density(double T, double gamma);

// Fourier transform F(x) = integral a_T(t) e^{ixt} dt of the density (real and
// even).  Adaptive quadrature to 1e-10 absolute for |x|*T < 50; 0 beyond, where
// the Gaussian envelope has underflowed.  gamma -> inf limit is exp(-T^2 x^2/2).
double filter_value(const TimeDensity& density, double x);

// sum_m p_m exp(-i lambda_m t)
std::complex<double> signal_expectation(const Spectrum& spectrum, double t);

// Rejection sampling from the untruncated Gaussian; redraw until |t| <= gamma*T.
double draw_time(const TimeDensity& density, RngStream& rng);

enum class Quadrature { kX, kY };  // W = I measures Re, W = S^dag measures Im

// Single Hadamard-test shot: +1 with probability (1 + s)/2 where s is the
// selected quadrature of signal_expectation(spectrum, t).
int hadamard_shot(const Spectrum& spectrum, double t, Quadrature quadrature,
                  RngStream& rng);

struct RuntimeLedger {
  double t_max = 0.0;        // max |t_n| (bound gamma*T_l for multi-level runs)
  double t_total = 0.0;      // sum of |t_n|, each sample counted once
  std::int64_t shots = 0;    // circuit executions (2 per sample: one X, one Y)
};

// kExact replaces the two shots by the exact signal value; test/diagnostic
// override, so the +-1 structure of z does not hold in that mode.
enum class MeasurementMode { kSingleShot, kExact };

struct Dataset {
  TimeDensity density;
  std::uint64_t seed = 0;
  std::vector<double> t;
  std::vector<std::complex<double>> z;  // Z_n = X_n + i Y_n
  RuntimeLedger ledger;

  int size() const { return static_cast<int>(t.size()); }
};

// Draws n samples (t_n, Z_n).  Sample n uses substream (seed, n), so the
// result is independent of evaluation order and bit-reproducible.
Dataset generate_dataset(const Spectrum& spectrum, const TimeDensity& density,
                         int n_samples, std::uint64_t seed,
                         MeasurementMode mode = MeasurementMode::kSingleShot);

// JSON-lines round trip: header {"T","gamma","seed","N"}, then one
// {"n","t","zr","zi"} record per sample (n is 1-based).
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text);

}  // namespace mmqcels

#endif  // MMQCELS_SAMPLING_HPP_
