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

#ifndef MMQCELS_ESTIMATOR_HPP_
#define MMQCELS_ESTIMATOR_HPP_

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmqcels/sampling.hpp"
#include "mmqcels/spectrum.hpp"

namespace mmqcels {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct ModeEstimate {
  std::vector<std::complex<double>> amplitudes;  // r_k
  std::vector<double> phases;                    // theta_k, ascending
  std::vector<Interval> intervals;               // search interval per mode
};

// Thrown when the normal equations for r are numerically singular, i.e. two
// requested phases coincide to working precision.
struct degenerate_modes_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// L_K(r, theta) = (1/N) sum_n |Z_n - sum_k r_k exp(-i theta_k t_n)|^2
double loss(const Dataset& dataset, const std::vector<std::complex<double>>& r,
            const std::vector<double>& theta);

// Closed-form minimizer of the loss over r at fixed phases (K x K Hermitian
// normal equations).  Requires K <= N and pairwise distinct phases.
std::vector<std::complex<double>> solve_r_given_theta(
    const Dataset& dataset, const std::vector<double>& theta);

struct SearchConfig {
  int grid_points = 201;       // per mode, interval endpoints included
  int refine_starts = 5;       // simplex restarts from the best grid points
  int refine_max_iter = 400;
  double collision_nudge = 1e-10;  // phases closer than this get nudged apart
  bool l1_constraint = false;      // rescale r onto sum |r_k| <= 1 before scoring
};

struct LevelFit {
  ModeEstimate estimate;
  double loss = 0.0;
};

// One level of the estimator: dense per-mode grids over the intervals (step =
// width / (grid_points - 1)), r solved in closed form at every grid tuple with
// tuples pruned to ascending phase order, then Nelder-Mead refinement from the
// best grid points.  Ties prefer the smaller phase tuple.
LevelFit minimize_level(const Dataset& dataset,
                        const std::vector<Interval>& intervals,
                        const SearchConfig& config = {});

struct Schedule {
  double gamma = 1.0;
  double t0 = 1.0;
  int n0 = 0;
  int levels = 1;              // l; levels run j = 0..l
  std::vector<double> t_j;     // T_j = 2^j * T0, size l+1
  std::vector<int> n_j;        // samples per level, size l+1
  double epsilon = 0.0;
  double eta = 0.0;
  double zeta = 0.0;
  double q = 0.0;
  bool l1_constraint = false;
};

struct ScheduleOverrides {
  // t0 may be given directly or as a multiple of 1/min_gap.
  bool has_gamma = false;   double gamma = 0.0;
  bool has_t0 = false;      double t0 = 0.0;
  bool has_t0_gap = false;  double t0_gap_multiple = 0.0;
  bool has_q = false;       double q = 0.0;
  bool has_n0 = false;      int n0 = 0;
  bool has_n_level = false; int n_level = 0;  // N_j for j >= 1
  bool has_levels = false;  int levels = 0;
  bool l1_constraint = false;
};

// Fills the dyadic schedule T_j = 2^j T0, l = max(ceil(log2(q/(eps*T0))), 1).
// Default constants: q = min(0.9, 3R/p_min + 0.05), gamma = max(1, ln(1/min{
// p_min*q, p_min*(p_min - 3R)})), T0 = 2*max(1, ln(1/q))/min_gap, and sample
// counts floored at 2000.  When the dominance condition p_min > 3R fails, the
// derived defaults are undefined and gamma/t0/n0/n_level must all be
// overridden.
Schedule build_schedule(const SpectrumStats& stats, double epsilon, double eta,
                        double zeta, const ScheduleOverrides& overrides = {});

// Expectation-error decomposition of the loss at (r, theta), all O(1/sqrt(N)):
//   e_pr  = 2 Re sum_{m,k} p_m r_k (g_N(theta_k - lambda_m) - F(theta_k - lambda_m))
//   e_rr  = 2 Re sum_{k1 != k2} conj(r_k1) r_k2 (g_N(th_k2 - th_k1) - F(th_k2 - th_k1))
//   e_rz  = -2 Re sum_k conj(r_k) (1/N) sum_n E_n exp(i theta_k t_n)
// with g_N(x) = (1/N) sum_n exp(i x t_n) and E_n = Z_n - signal(t_n).
struct DiagnosticsReport {
  double e_pr = 0.0;
  double e_rr = 0.0;
  double e_rz = 0.0;
  double residual_mean = 0.0;  // |(1/N) sum_n E_n|
  double loss_at_optimum = 0.0;
  double loss_at_truth = 0.0;  // loss at (p_m, lambda_m) over the truth modes
};

DiagnosticsReport expectation_error_diagnostics(const Dataset& dataset,
                                                const Spectrum& spectrum,
                                                const DominantSpec& truth,
                                                const ModeEstimate& estimate);

struct LevelRecord {
  int level = 0;
  double t_level = 0.0;      // T_j
  double t_bound = 0.0;      // gamma * T_j
  RuntimeLedger cumulative;  // ledger up to and including this level
  ModeEstimate estimate;
  double loss = 0.0;
};

struct MmqcelsResult {
  ModeEstimate estimate;
  double loss = 0.0;
  RuntimeLedger ledger;      // t_max = gamma * T_l bound, t_total/shots summed
  DiagnosticsReport diagnostics;
  std::vector<LevelRecord> levels;
};

// Multi-level estimator: per level j, a fresh dataset with density width T_j,
// minimize_level over the current intervals, then shrink mode k's interval to
// [theta_k - pi/T_j, theta_k + pi/T_j] clipped to [-pi, pi].  Level j draws
// from seed substream (seed, j).  Diagnostics use the final level's dataset,
// with truth = the K largest-overlap modes.
MmqcelsResult mm_qcels(const Spectrum& spectrum, int k_modes,
                       const Schedule& schedule, std::uint64_t seed,
                       MeasurementMode mode = MeasurementMode::kSingleShot,
                       const SearchConfig& search = {});

// JSON: {"theta","r_re","r_im","intervals","t_max","t_total","loss"}.
std::string estimate_to_json(const MmqcelsResult& result);

}  // namespace mmqcels

#endif  // MMQCELS_ESTIMATOR_HPP_
