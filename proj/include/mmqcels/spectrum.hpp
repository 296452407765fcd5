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

#ifndef MMQCELS_SPECTRUM_HPP_
#define MMQCELS_SPECTRUM_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mmqcels {

// Eigenvalues (ascending, in [-pi, pi]) plus squared initial-state overlaps
// p_m >= 0 with sum(p) = 1.
struct Spectrum {
  std::vector<double> eigenvalues;
  std::vector<double> overlaps;

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

// Indices (0-based, sorted) of the modes treated as dominant.
struct DominantSpec {
  std::vector<int> indices;

  int count() const { return static_cast<int>(indices.size()); }
};

struct SpectrumStats {
  double p_min = 0.0;    // min overlap among dominant modes
  double min_gap = 0.0;  // min |lambda_i - lambda_j| over dominant pairs; +inf for K=1
  double residual = 0.0; // total overlap outside the dominant set
};

enum class Boundary { kOpen, kPeriodic };

struct HamiltonianModel {
  enum class Kind { kTfim, kHubbard } kind = Kind::kTfim;
  int sites = 1;
  double g = 0.0;       // TFIM transverse field
  double t = 1.0;       // Hubbard hopping
  double u = 0.0;       // Hubbard interaction
  Boundary boundary = Boundary::kOpen;
};

// How the residual overlap mass is spread over non-dominant modes.
struct ResidualSpec {
  enum class Policy { kUniform, kSingleMode, kCustom } policy = Policy::kUniform;
  int mode = -1;                  // target for kSingleMode; -1 = first non-dominant
  std::vector<double> weights;    // kCustom: relative weights, one per non-dominant mode
};

// Transverse-field Ising chain, -(sum Z_i Z_{i+1} [+ Z_L Z_1]) - g sum X_i.
// Dense 2^sites matrix, real symmetric.  1 <= sites <= 12.
Eigen::MatrixXd build_tfim(int sites, double g, Boundary boundary);

// Spinful Fermi-Hubbard chain with open boundary, Jordan-Wigner mapped with the
// spin-up block of `sites` modes followed by the spin-down block:
//   -t sum_{j,s} (c^+_{j,s} c_{j+1,s} + h.c.) + U sum_j (n_up - 1/2)(n_dn - 1/2).
// Dense 4^sites matrix, real symmetric.  1 <= sites <= 5.
Eigen::MatrixXd build_hubbard(int sites, double t, double u);

Eigen::MatrixXd build_model(const HamiltonianModel& model);

// Eigenvalues of pi*H / (4*||H||_2), ascending.  The spectral norm comes from
// the same dense solve, so max |eigenvalue| of the result is pi/4 exactly.
std::vector<double> normalize_spectrum(const Eigen::MatrixXd& h);

// Attaches overlaps: `weights[i]` goes to mode dominant.indices[i], and the
// remaining mass 1 - sum(weights) is spread per `residual`.  Refuses dominant
// sets containing eigenvalues closer than 1e-12 (the estimator cannot separate
// exactly degenerate dominant modes).
Spectrum assign_overlaps(const std::vector<double>& eigenvalues,
                         const DominantSpec& dominant,
                         const std::vector<double>& weights,
                         const ResidualSpec& residual);

SpectrumStats spectrum_stats(const Spectrum& spectrum, const DominantSpec& dominant);

// JSON round trip: {"eigenvalues": [...], "overlaps": [...]}.
std::string spectrum_to_json(const Spectrum& spectrum);
Spectrum spectrum_from_json(const std::string& text);

}  // namespace mmqcels

#endif  // MMQCELS_SPECTRUM_HPP_
