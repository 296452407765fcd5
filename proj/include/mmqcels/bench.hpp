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

#ifndef MMQCELS_BENCH_HPP_
#define MMQCELS_BENCH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmqcels/estimator.hpp"
#include "mmqcels/qpe.hpp"
#include "mmqcels/spectrum.hpp"

namespace mmqcels {

struct BenchRecord {
  enum class Method { kMmqcels, kQpe } method = Method::kMmqcels;
  int trial = 0;
  std::uint64_t seed = 0;
  double t_max = 0.0;
  double t_total = 0.0;
  double error = 0.0;      // max over matched modes; |theta_1 - lambda_1| for QPE
  double err_mode1 = 0.0;
  double err_mode2 = 0.0;  // NaN where the method estimates a single mode
  int k_modes = 0;         // estimator mode count; 0 for QPE rows
};

struct ModeErrors {
  std::vector<double> per_mode;  // indexed by dominant truth, ascending eigenvalue
  double max_error = 0.0;
};

// Pairs estimated phases with the dominant eigenvalues so the maximum
// |theta - lambda| is minimal: exhaustive permutations for K <= 3, sorted
// pairing (optimal for the max metric on a line) for larger K.  Requires
// equally many estimated modes and dominant truths.
ModeErrors match_modes(const ModeEstimate& estimate, const Spectrum& spectrum,
                       const DominantSpec& dominant);

// Keeps the `count` modes of largest |r| (used before matching when the
// estimator ran with more modes than there are dominant truths).
ModeEstimate select_dominant(const ModeEstimate& estimate, int count);

struct SpectrumSource {
  std::optional<HamiltonianModel> model;  // build + normalize
  std::optional<Spectrum> inline_spectrum;
  DominantSpec dominant;
  std::vector<double> weights;
  ResidualSpec residual;
};

struct SamplingSection {
  double t = 1.0;
  double gamma = 1.0;
  int n = 1000;
  bool exact = false;
};

struct QpeSection {
  int ancilla_min = 6;
  int ancilla_max = 15;
  int repetitions = 10;
  bool dither = true;  // seeded sub-bin energy offset, see qpe_trial_error
};

struct LandscapeSection {
  int levels = 3;
  int slice_points = 400;
};

struct ExperimentConfig {
  SpectrumSource source;
  int k_modes = 2;
  double epsilon = 1e-3;
  double eta = 0.1;
  double zeta = 0.5;
  ScheduleOverrides schedule;
  int trials = 10;
  std::uint64_t seed = 0;
  std::string preset;  // bench subcommand dispatch
  std::string out;
  SamplingSection sampling;
  QpeSection qpe;
  LandscapeSection landscape;
  MeasurementMode mode = MeasurementMode::kSingleShot;
};

// Parses + schema-validates; unknown keys are rejected (throws
// std::invalid_argument with the offending key path).
ExperimentConfig parse_experiment_config(const std::string& json_text);

Spectrum realize_spectrum(const SpectrumSource& source);

// One QPE experiment with an optional seeded uniform sub-bin energy offset.
// The offset emulates a generic phase position: the benchmark Hamiltonians
// have symmetric spectra, so the normalized extremes sit exactly on dyadic
// phase-grid points and undithered QPE would be exact at every depth.
double qpe_trial_error(const Spectrum& spectrum, double lambda1,
                       const QpeConfig& config, bool dither, std::uint64_t seed);

// Depth sweeps for the figure-style comparison: per trial one multi-level
// MM-QCELS run (one row per level, t_max = gamma*T_j) plus QPE rows over the
// ancilla range.  Rows are sorted by (method, t_max, trial).
std::vector<BenchRecord> run_figure3(const ExperimentConfig& config);

struct LandscapePoint {
  double t = 0.0;
  int level = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double loss = 0.0;
};

struct LandscapeSlice {
  double t = 0.0;
  int level = 0;
  int trial = 0;
  int mode = 0;
  std::vector<double> theta;
  std::vector<double> loss;  // L_K(r*, ..., theta, ...) with the other phase at its optimum
};

struct LandscapeResult {
  std::vector<LandscapePoint> minimizers;
  std::vector<LandscapeSlice> slices;
};

// K = 2 landscape study: per trial a multi-level run, recording the minimizer
// pair and the two 1-D loss slices (r fixed at r*) at every level.
LandscapeResult run_landscape(const ExperimentConfig& config);

// Robustness presets ("wrong_k", "small_pmin").  wrong_k sweeps the estimator
// mode count K over {2, 3, 4} on the same per-trial data, with top-2-|r|
// selection before matching when K > 2; its MM-QCELS rows carry trial =
// 100*K + trial_index so the sweep stays identifiable in the flat CSV.
std::vector<BenchRecord> run_robustness(const ExperimentConfig& config);

// Header: method,trial,seed,t_max,t_total,error,err_mode1,err_mode2
std::string records_to_csv(const std::vector<BenchRecord>& records);
void write_csv(const std::string& path, const std::string& text);

std::string landscape_minimizers_csv(const LandscapeResult& result);
std::string landscape_slices_csv(const LandscapeResult& result);

// Canned benchmark configurations; `name` in {figure3_tfim, figure3_hubbard,
// figure3_synthetic, wrong_k, small_pmin, landscape_tfim}.
// preset_config_text returns the raw JSON, onto which the CLI merge-patches
// user overrides before dispatch.
std::string preset_config_text(const std::string& name);
ExperimentConfig preset_config(const std::string& name);

}  // namespace mmqcels

#endif  // MMQCELS_BENCH_HPP_
