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

#include "mmqcels/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "mmqcels/rng.hpp"

namespace mmqcels {
namespace {

using nlohmann::json;

const double kPi = std::acos(-1.0);

// QPE row streams are keyed past the per-level dataset keys (levels cap at
// 40), so the two methods never draw from the same substream of a trial seed.
constexpr std::uint64_t kQpeStreamBase = 64;

// --- config parsing -------------------------------------------------------

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void bad_value(const std::string& path, const std::string& why) {
  throw std::invalid_argument("config: " + path + " " + why);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known)
      throw std::invalid_argument("config: unknown key " +
                                  join_path(path, item.key()));
  }
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) bad_value(path, "must be an object");
}

template <typename T>
T field_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    bad_value(path, "has the wrong type");
  }
}

template <typename T>
void read_field(const json& j, const std::string& path, const char* key,
                T& out) {
  if (j.contains(key)) out = field_as<T>(j.at(key), join_path(path, key));
}

HamiltonianModel parse_model(const json& j, const std::string& path) {
  require_object(j, path);
  HamiltonianModel model;
  std::string kind;
  read_field(j, path, "kind", kind);
  if (kind == "tfim") {
    check_keys(j, path, {"kind", "sites", "g", "boundary"});
    model.kind = HamiltonianModel::Kind::kTfim;
    read_field(j, path, "sites", model.sites);
    read_field(j, path, "g", model.g);
    std::string boundary = "open";
    read_field(j, path, "boundary", boundary);
    if (boundary == "open") {
      model.boundary = Boundary::kOpen;
    } else if (boundary == "periodic") {
      model.boundary = Boundary::kPeriodic;
    } else {
      bad_value(join_path(path, "boundary"), "must be open or periodic");
    }
  } else if (kind == "hubbard") {
    check_keys(j, path, {"kind", "sites", "t", "u"});
    model.kind = HamiltonianModel::Kind::kHubbard;
    model.boundary = Boundary::kOpen;
    read_field(j, path, "sites", model.sites);
    read_field(j, path, "t", model.t);
    read_field(j, path, "u", model.u);
  } else {
    bad_value(join_path(path, "kind"), "must be tfim or hubbard");
  }
  if (model.sites < 1) bad_value(join_path(path, "sites"), "must be positive");
  return model;
}

Spectrum parse_inline_spectrum(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"eigenvalues", "overlaps"});
  if (!j.contains("eigenvalues"))
    bad_value(join_path(path, "eigenvalues"), "is required");
  Spectrum s;
  read_field(j, path, "eigenvalues", s.eigenvalues);
  read_field(j, path, "overlaps", s.overlaps);
  return s;
}

ResidualSpec parse_residual(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"policy", "mode", "weights"});
  ResidualSpec residual;
  std::string policy = "uniform";
  read_field(j, path, "policy", policy);
  if (policy == "uniform") {
    residual.policy = ResidualSpec::Policy::kUniform;
  } else if (policy == "single_mode") {
    residual.policy = ResidualSpec::Policy::kSingleMode;
  } else if (policy == "custom") {
    residual.policy = ResidualSpec::Policy::kCustom;
  } else {
    bad_value(join_path(path, "policy"),
              "must be uniform, single_mode or custom");
  }
  read_field(j, path, "mode", residual.mode);
  read_field(j, path, "weights", residual.weights);
  return residual;
}

SpectrumSource parse_source(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"model", "spectrum", "dominant", "weights", "residual"});
  if (j.contains("model") && j.contains("spectrum"))
    bad_value(path, "takes either model or spectrum, not both");
  SpectrumSource source;
  if (j.contains("model"))
    source.model = parse_model(j.at("model"), join_path(path, "model"));
  if (j.contains("spectrum"))
    source.inline_spectrum =
        parse_inline_spectrum(j.at("spectrum"), join_path(path, "spectrum"));
  read_field(j, path, "dominant", source.dominant.indices);
  std::sort(source.dominant.indices.begin(), source.dominant.indices.end());
  if (std::adjacent_find(source.dominant.indices.begin(),
                         source.dominant.indices.end()) !=
      source.dominant.indices.end())
    bad_value(join_path(path, "dominant"), "repeats an index");
  read_field(j, path, "weights", source.weights);
  if (j.contains("residual"))
    source.residual =
        parse_residual(j.at("residual"), join_path(path, "residual"));
  return source;
}

ScheduleOverrides parse_schedule(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path,
             {"gamma", "t0", "t0_gap", "q", "n0", "n_level", "levels", "l1"});
  ScheduleOverrides overrides;
  if (j.contains("gamma")) {
    overrides.has_gamma = true;
    overrides.gamma = field_as<double>(j.at("gamma"), join_path(path, "gamma"));
  }
  if (j.contains("t0")) {
    overrides.has_t0 = true;
    overrides.t0 = field_as<double>(j.at("t0"), join_path(path, "t0"));
  }
  if (j.contains("t0_gap")) {
    overrides.has_t0_gap = true;
    overrides.t0_gap_multiple =
        field_as<double>(j.at("t0_gap"), join_path(path, "t0_gap"));
  }
  if (overrides.has_t0 && overrides.has_t0_gap)
    bad_value(path, "t0 and t0_gap are mutually exclusive");
  if (j.contains("q")) {
    overrides.has_q = true;
    overrides.q = field_as<double>(j.at("q"), join_path(path, "q"));
  }
  if (j.contains("n0")) {
    overrides.has_n0 = true;
    overrides.n0 = field_as<int>(j.at("n0"), join_path(path, "n0"));
  }
  if (j.contains("n_level")) {
    overrides.has_n_level = true;
    overrides.n_level =
        field_as<int>(j.at("n_level"), join_path(path, "n_level"));
  }
  if (j.contains("levels")) {
    overrides.has_levels = true;
    overrides.levels = field_as<int>(j.at("levels"), join_path(path, "levels"));
  }
  read_field(j, path, "l1", overrides.l1_constraint);
  return overrides;
}

SamplingSection parse_sampling(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"t", "gamma", "n", "exact"});
  SamplingSection sampling;
  read_field(j, path, "t", sampling.t);
  read_field(j, path, "gamma", sampling.gamma);
  read_field(j, path, "n", sampling.n);
  read_field(j, path, "exact", sampling.exact);
  if (!(sampling.t > 0.0)) bad_value(join_path(path, "t"), "must be positive");
  if (!(sampling.gamma > 0.0))
    bad_value(join_path(path, "gamma"), "must be positive");
  if (sampling.n < 1) bad_value(join_path(path, "n"), "must be positive");
  return sampling;
}

QpeSection parse_qpe(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"ancilla_min", "ancilla_max", "repetitions", "dither"});
  QpeSection qpe;
  read_field(j, path, "ancilla_min", qpe.ancilla_min);
  read_field(j, path, "ancilla_max", qpe.ancilla_max);
  read_field(j, path, "repetitions", qpe.repetitions);
  read_field(j, path, "dither", qpe.dither);
  if (qpe.ancilla_min < 1 || qpe.ancilla_max > 24 ||
      qpe.ancilla_min > qpe.ancilla_max)
    bad_value(path, "needs 1 <= ancilla_min <= ancilla_max <= 24");
  if (qpe.repetitions < 1)
    bad_value(join_path(path, "repetitions"), "must be positive");
  return qpe;
}

LandscapeSection parse_landscape(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"levels", "slice_points"});
  LandscapeSection landscape;
  read_field(j, path, "levels", landscape.levels);
  read_field(j, path, "slice_points", landscape.slice_points);
  if (landscape.levels < 1 || landscape.levels > 40)
    bad_value(join_path(path, "levels"), "must be in [1, 40]");
  if (landscape.slice_points < 2)
    bad_value(join_path(path, "slice_points"), "must be at least 2");
  return landscape;
}

// --- record plumbing ------------------------------------------------------

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

bool row_less(const BenchRecord& a, const BenchRecord& b) {
  if (a.method != b.method)
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  if (a.t_max != b.t_max) return a.t_max < b.t_max;
  return a.trial < b.trial;
}

struct RunContext {
  Spectrum spectrum;
  SpectrumStats stats;
  Schedule schedule;
};

RunContext make_context(const ExperimentConfig& config,
                        const ScheduleOverrides& overrides) {
  RunContext ctx;
  ctx.spectrum = realize_spectrum(config.source);
  if (config.source.dominant.count() < 1)
    throw std::invalid_argument("bench: source.dominant must list the target modes");
  if (config.trials < 1)
    throw std::invalid_argument("bench: trials must be positive");
  ctx.stats = spectrum_stats(ctx.spectrum, config.source.dominant);
  ctx.schedule = build_schedule(ctx.stats, config.epsilon, config.eta,
                                config.zeta, overrides);
  return ctx;
}

// One multi-level run; one record per level.  When the estimator carries more
// modes than there are dominant truths, the strongest |r| modes are kept
// before matching.
std::vector<BenchRecord> mm_trial_rows(const RunContext& ctx,
                                       const ExperimentConfig& config,
                                       int k_modes, int row_trial,
                                       std::uint64_t trial_seed) {
  const MmqcelsResult run =
      mm_qcels(ctx.spectrum, k_modes, ctx.schedule, trial_seed, config.mode);
  const int truths = config.source.dominant.count();
  std::vector<BenchRecord> rows;
  rows.reserve(run.levels.size());
  for (const LevelRecord& level : run.levels) {
    const ModeErrors errors = match_modes(
        k_modes > truths ? select_dominant(level.estimate, truths)
                         : level.estimate,
        ctx.spectrum, config.source.dominant);
    BenchRecord row;
    row.method = BenchRecord::Method::kMmqcels;
    row.trial = row_trial;
    row.seed = trial_seed;
    row.t_max = level.t_bound;
    row.t_total = level.cumulative.t_total;
    row.error = errors.max_error;
    row.err_mode1 = errors.per_mode[0];
    row.err_mode2 = errors.per_mode.size() > 1
                        ? errors.per_mode[1]
                        : std::numeric_limits<double>::quiet_NaN();
    row.k_modes = k_modes;
    rows.push_back(row);
  }
  return rows;
}

std::vector<BenchRecord> qpe_trial_rows(const RunContext& ctx,
                                        const ExperimentConfig& config,
                                        int trial, std::uint64_t trial_seed) {
  if (config.qpe.ancilla_min < 1 || config.qpe.ancilla_max > 24 ||
      config.qpe.ancilla_min > config.qpe.ancilla_max ||
      config.qpe.repetitions < 1)
    throw std::invalid_argument("bench: malformed qpe section");
  const double lambda1 =
      ctx.spectrum.eigenvalues[config.source.dominant.indices.front()];
  std::vector<BenchRecord> rows;
  for (int d = config.qpe.ancilla_min; d <= config.qpe.ancilla_max; ++d) {
    QpeConfig qpe;
    qpe.ancillas = d;
    qpe.repetitions = config.qpe.repetitions;
    const std::uint64_t row_seed = RngStream::mix(
        trial_seed, kQpeStreamBase + static_cast<std::uint64_t>(d));
    const double depth = std::ldexp(1.0, d) - 1.0;
    BenchRecord row;
    row.method = BenchRecord::Method::kQpe;
    row.trial = trial;
    row.seed = row_seed;
    row.t_max = depth;
    row.t_total = depth * config.qpe.repetitions;
    row.error =
        qpe_trial_error(ctx.spectrum, lambda1, qpe, config.qpe.dither, row_seed);
    row.err_mode1 = row.error;
    row.err_mode2 = std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

// Trials are independent; run them on worker threads and splice in trial
// order, so the result does not depend on scheduling.
template <typename Fn>
std::vector<BenchRecord> gather_trials(int trials, const Fn& fn) {
  std::vector<std::future<std::vector<BenchRecord>>> futures;
  futures.reserve(trials);
  for (int t = 0; t < trials; ++t)
    futures.push_back(std::async(std::launch::async, fn, t));
  std::vector<BenchRecord> rows;
  for (auto& future : futures) {
    std::vector<BenchRecord> part = future.get();
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

}  // namespace

ModeErrors match_modes(const ModeEstimate& estimate, const Spectrum& spectrum,
                       const DominantSpec& dominant) {
  const int k = dominant.count();
  if (k < 1) throw std::invalid_argument("match_modes: empty dominant set");
  if (static_cast<int>(estimate.phases.size()) != k)
    throw std::invalid_argument(
        "match_modes: estimate and dominant set sizes differ");
  std::vector<double> truth(k);
  for (int i = 0; i < k; ++i) {
    const int idx = dominant.indices[i];
    if (idx < 0 || idx >= spectrum.size())
      throw std::invalid_argument("match_modes: dominant index out of range");
    truth[i] = spectrum.eigenvalues[idx];
  }

  ModeErrors out;
  out.per_mode.assign(k, 0.0);
  if (k <= 3) {
    std::vector<int> perm(k), best(k);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_worst = std::numeric_limits<double>::infinity();
    do {
      double worst = 0.0;
      for (int i = 0; i < k; ++i)
        worst = std::max(worst, std::abs(estimate.phases[perm[i]] - truth[i]));
      if (worst < best_worst) {
        best_worst = worst;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int i = 0; i < k; ++i)
      out.per_mode[i] = std::abs(estimate.phases[best[i]] - truth[i]);
    out.max_error = best_worst;
  } else {
    // Rank pairing: on a line, matching i-th smallest to i-th smallest
    // minimizes the worst pair distance.
    std::vector<int> truth_rank(k), est_rank(k);
    std::iota(truth_rank.begin(), truth_rank.end(), 0);
    std::iota(est_rank.begin(), est_rank.end(), 0);
    std::sort(truth_rank.begin(), truth_rank.end(),
              [&](int a, int b) { return truth[a] < truth[b]; });
    std::sort(est_rank.begin(), est_rank.end(), [&](int a, int b) {
      return estimate.phases[a] < estimate.phases[b];
    });
    for (int r = 0; r < k; ++r) {
      const double err =
          std::abs(estimate.phases[est_rank[r]] - truth[truth_rank[r]]);
      out.per_mode[truth_rank[r]] = err;
      out.max_error = std::max(out.max_error, err);
    }
  }
  return out;
}

ModeEstimate select_dominant(const ModeEstimate& estimate, int count) {
  const int k = static_cast<int>(estimate.phases.size());
  if (count < 1 || count > k)
    throw std::invalid_argument("select_dominant: count outside [1, K]");
  if (estimate.amplitudes.size() != estimate.phases.size())
    throw std::invalid_argument("select_dominant: malformed estimate");
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(estimate.amplitudes[a]) > std::abs(estimate.amplitudes[b]);
  });
  order.resize(count);
  std::sort(order.begin(), order.end());  // keep ascending phase order
  ModeEstimate out;
  for (int idx : order) {
    out.phases.push_back(estimate.phases[idx]);
    out.amplitudes.push_back(estimate.amplitudes[idx]);
    if (idx < static_cast<int>(estimate.intervals.size()))
      out.intervals.push_back(estimate.intervals[idx]);
  }
  return out;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& err) {
    throw std::invalid_argument(std::string("config: ") + err.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be an object");
  check_keys(j, "",
             {"source", "k_modes", "epsilon", "eta", "zeta", "schedule",
              "trials", "seed", "preset", "out", "sampling", "qpe", "landscape",
              "mode"});
  ExperimentConfig config;
  if (j.contains("source")) config.source = parse_source(j.at("source"), "source");
  read_field(j, "", "k_modes", config.k_modes);
  if (config.k_modes < 1 || config.k_modes > 4)
    bad_value("k_modes", "must be in [1, 4]");
  read_field(j, "", "epsilon", config.epsilon);
  if (!(config.epsilon > 0.0) || !std::isfinite(config.epsilon))
    bad_value("epsilon", "must be positive");
  read_field(j, "", "eta", config.eta);
  if (!(config.eta > 0.0)) bad_value("eta", "must be positive");
  read_field(j, "", "zeta", config.zeta);
  if (config.zeta < 0.0) bad_value("zeta", "must be nonnegative");
  if (j.contains("schedule"))
    config.schedule = parse_schedule(j.at("schedule"), "schedule");
  read_field(j, "", "trials", config.trials);
  if (config.trials < 1) bad_value("trials", "must be positive");
  read_field(j, "", "seed", config.seed);
  read_field(j, "", "preset", config.preset);
  read_field(j, "", "out", config.out);
  if (j.contains("sampling"))
    config.sampling = parse_sampling(j.at("sampling"), "sampling");
  if (j.contains("qpe")) config.qpe = parse_qpe(j.at("qpe"), "qpe");
  if (j.contains("landscape"))
    config.landscape = parse_landscape(j.at("landscape"), "landscape");
  if (j.contains("mode")) {
    const std::string mode = field_as<std::string>(j.at("mode"), "mode");
    if (mode == "single_shot") {
      config.mode = MeasurementMode::kSingleShot;
    } else if (mode == "exact") {
      config.mode = MeasurementMode::kExact;
    } else {
      bad_value("mode", "must be single_shot or exact");
    }
  }
  return config;
}

Spectrum realize_spectrum(const SpectrumSource& source) {
  if (source.model && source.inline_spectrum)
    throw std::invalid_argument(
        "spectrum source: model and inline spectrum are exclusive");
  if (source.model) {
    if (source.dominant.count() < 1 || source.weights.empty())
      throw std::invalid_argument(
          "spectrum source: a model needs dominant indices and weights");
    return assign_overlaps(normalize_spectrum(build_model(*source.model)),
                           source.dominant, source.weights, source.residual);
  }
  if (!source.inline_spectrum)
    throw std::invalid_argument(
        "spectrum source: needs a model or an inline spectrum");
  const Spectrum& given = *source.inline_spectrum;
  if (given.eigenvalues.empty())
    throw std::invalid_argument("spectrum source: empty eigenvalue list");
  if (!std::is_sorted(given.eigenvalues.begin(), given.eigenvalues.end()))
    throw std::invalid_argument(
        "spectrum source: eigenvalues must be ascending");
  for (double ev : given.eigenvalues) {
    if (!(ev >= -kPi && ev <= kPi))
      throw std::invalid_argument(
          "spectrum source: eigenvalues must lie in [-pi, pi]");
  }
  if (!source.weights.empty())
    return assign_overlaps(given.eigenvalues, source.dominant, source.weights,
                           source.residual);
  if (given.overlaps.size() != given.eigenvalues.size())
    throw std::invalid_argument(
        "spectrum source: overlaps must match eigenvalues");
  double total = 0.0;
  for (double p : given.overlaps) {
    if (p < 0.0)
      throw std::invalid_argument("spectrum source: negative overlap");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("spectrum source: overlaps must sum to one");
  return given;
}

double qpe_trial_error(const Spectrum& spectrum, double lambda1,
                       const QpeConfig& config, bool dither,
                       std::uint64_t seed) {
  double offset = 0.0;
  if (dither) {
    const double bin = 2.0 * kPi / std::ldexp(1.0, config.ancillas);
    offset = RngStream(seed).substream(0).uniform() * bin;
  }
  Spectrum probe = spectrum;
  if (offset != 0.0) {
    for (double& ev : probe.eigenvalues) ev += offset;
  }
  const QpeEstimate estimate =
      qpe_estimate_min(probe, config, RngStream::mix(seed, 1));
  return std::abs(estimate.theta - offset - lambda1);
}

std::vector<BenchRecord> run_figure3(const ExperimentConfig& config) {
  const RunContext ctx = make_context(config, config.schedule);
  if (config.k_modes < config.source.dominant.count())
    throw std::invalid_argument("run_figure3: k_modes below the dominant count");
  std::vector<BenchRecord> rows = gather_trials(config.trials, [&](int t) {
    const std::uint64_t trial_seed =
        config.seed ^ static_cast<std::uint64_t>(t);
    std::vector<BenchRecord> part =
        mm_trial_rows(ctx, config, config.k_modes, t, trial_seed);
    std::vector<BenchRecord> qpe = qpe_trial_rows(ctx, config, t, trial_seed);
    part.insert(part.end(), qpe.begin(), qpe.end());
    return part;
  });
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

LandscapeResult run_landscape(const ExperimentConfig& config) {
  if (config.k_modes != 2)
    throw std::invalid_argument("run_landscape: the sweep is K = 2 only");
  if (config.landscape.slice_points < 2)
    throw std::invalid_argument("run_landscape: slice_points must be >= 2");
  ScheduleOverrides overrides = config.schedule;
  overrides.has_levels = true;
  overrides.levels = config.landscape.levels;
  const RunContext ctx = make_context(config, overrides);
  const int points = config.landscape.slice_points;

  struct TrialSweep {
    std::vector<LandscapePoint> minimizers;
    std::vector<LandscapeSlice> slices;
  };
  // Reimplements the estimator's level loop so the recorded minimizers agree
  // bit for bit with mm_qcels under the same trial seed.
  const auto sweep_trial = [&](int trial) {
    const std::uint64_t trial_seed =
        config.seed ^ static_cast<std::uint64_t>(trial);
    SearchConfig search;
    search.l1_constraint = ctx.schedule.l1_constraint;
    std::vector<Interval> intervals(2, Interval{-kPi, kPi});
    TrialSweep out;
    for (int j = 0; j <= ctx.schedule.levels; ++j) {
      const double t_j = ctx.schedule.t_j[j];
      const TimeDensity density = make_time_density(t_j, ctx.schedule.gamma);
      const std::uint64_t level_seed =
          RngStream::mix(trial_seed, static_cast<std::uint64_t>(j));
      const Dataset data = generate_dataset(
          ctx.spectrum, density, ctx.schedule.n_j[j], level_seed, config.mode);
      const LevelFit fit = minimize_level(data, intervals, search);

      LandscapePoint point;
      point.t = t_j;
      point.level = j;
      point.trial = trial;
      point.seed = trial_seed;
      point.theta1 = fit.estimate.phases[0];
      point.theta2 = fit.estimate.phases[1];
      point.loss = fit.loss;
      out.minimizers.push_back(point);

      // 1-D slices through the minimizer over the intervals searched at this
      // level, with r fixed at r* and the other phase at its optimum.
      for (int mode = 0; mode < 2; ++mode) {
        const Interval box = fit.estimate.intervals[mode];
        LandscapeSlice slice;
        slice.t = t_j;
        slice.level = j;
        slice.trial = trial;
        slice.mode = mode + 1;
        slice.theta.resize(points);
        slice.loss.resize(points);
        std::vector<double> probe = fit.estimate.phases;
        const double step = box.width() / (points - 1);
        for (int i = 0; i < points; ++i) {
          const double x = i + 1 == points ? box.hi : box.lo + step * i;
          probe[mode] = x;
          slice.theta[i] = x;
          slice.loss[i] = loss(data, fit.estimate.amplitudes, probe);
        }
        out.slices.push_back(std::move(slice));
      }

      const double half = kPi / t_j;
      for (int k = 0; k < 2; ++k) {
        intervals[k] = {std::max(fit.estimate.phases[k] - half, -kPi),
                        std::min(fit.estimate.phases[k] + half, kPi)};
      }
    }
    return out;
  };

  std::vector<std::future<TrialSweep>> futures;
  futures.reserve(config.trials);
  for (int t = 0; t < config.trials; ++t)
    futures.push_back(std::async(std::launch::async, sweep_trial, t));
  LandscapeResult result;
  for (auto& future : futures) {
    TrialSweep part = future.get();
    result.minimizers.insert(result.minimizers.end(), part.minimizers.begin(),
                             part.minimizers.end());
    result.slices.insert(result.slices.end(),
                         std::make_move_iterator(part.slices.begin()),
                         std::make_move_iterator(part.slices.end()));
  }
  // Group panels by level, then trial.
  std::sort(result.minimizers.begin(), result.minimizers.end(),
            [](const LandscapePoint& a, const LandscapePoint& b) {
              if (a.level != b.level) return a.level < b.level;
              return a.trial < b.trial;
            });
  std::sort(result.slices.begin(), result.slices.end(),
            [](const LandscapeSlice& a, const LandscapeSlice& b) {
              if (a.level != b.level) return a.level < b.level;
              if (a.trial != b.trial) return a.trial < b.trial;
              return a.mode < b.mode;
            });
  return result;
}

std::vector<BenchRecord> run_robustness(const ExperimentConfig& config) {
  if (config.preset != "wrong_k" && config.preset != "small_pmin")
    throw std::invalid_argument(
        "run_robustness: preset must be wrong_k or small_pmin");
  const RunContext ctx = make_context(config, config.schedule);
  std::vector<BenchRecord> rows;
  if (config.preset == "wrong_k") {
    // K sweep over shared per-trial data: trial_seed depends only on the
    // trial index, so every K block fits the same datasets.
    for (int k = 2; k <= 4; ++k) {
      std::vector<BenchRecord> part = gather_trials(config.trials, [&, k](int t) {
        return mm_trial_rows(ctx, config, k, 100 * k + t,
                             config.seed ^ static_cast<std::uint64_t>(t));
      });
      rows.insert(rows.end(), part.begin(), part.end());
    }
  } else {
    if (config.k_modes < config.source.dominant.count())
      throw std::invalid_argument(
          "run_robustness: k_modes below the dominant count");
    std::vector<BenchRecord> part = gather_trials(config.trials, [&](int t) {
      return mm_trial_rows(ctx, config, config.k_modes, t,
                           config.seed ^ static_cast<std::uint64_t>(t));
    });
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::vector<BenchRecord> qpe = gather_trials(config.trials, [&](int t) {
    return qpe_trial_rows(ctx, config, t,
                          config.seed ^ static_cast<std::uint64_t>(t));
  });
  rows.insert(rows.end(), qpe.begin(), qpe.end());
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::string records_to_csv(const std::vector<BenchRecord>& records) {
  std::string out = "method,trial,seed,t_max,t_total,error,err_mode1,err_mode2\n";
  for (const BenchRecord& r : records) {
    out += r.method == BenchRecord::Method::kMmqcels ? "MMQCELS" : "QPE";
    out += ',' + std::to_string(r.trial);
    out += ',' + std::to_string(r.seed);
    out += ',' + format_double(r.t_max);
    out += ',' + format_double(r.t_total);
    out += ',' + format_double(r.error);
    out += ',' + format_double(r.err_mode1);
    out += ',';
    if (!std::isnan(r.err_mode2)) out += format_double(r.err_mode2);
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("short write to " + path);
}

std::string landscape_minimizers_csv(const LandscapeResult& result) {
  std::string out = "t,level,trial,seed,theta1,theta2,loss\n";
  for (const LandscapePoint& p : result.minimizers) {
    out += format_double(p.t);
    out += ',' + std::to_string(p.level);
    out += ',' + std::to_string(p.trial);
    out += ',' + std::to_string(p.seed);
    out += ',' + format_double(p.theta1);
    out += ',' + format_double(p.theta2);
    out += ',' + format_double(p.loss);
    out += '\n';
  }
  return out;
}

std::string landscape_slices_csv(const LandscapeResult& result) {
  std::string out = "t,level,trial,mode,theta,loss\n";
  for (const LandscapeSlice& s : result.slices) {
    for (std::size_t i = 0; i < s.theta.size(); ++i) {
      out += format_double(s.t);
      out += ',' + std::to_string(s.level);
      out += ',' + std::to_string(s.trial);
      out += ',' + std::to_string(s.mode);
      out += ',' + format_double(s.theta[i]);
      out += ',' + format_double(s.loss[i]);
      out += '\n';
    }
  }
  return out;
}

std::string preset_config_text(const std::string& name) {
  const json tfim_model = {
      {"kind", "tfim"}, {"sites", 8}, {"g", 4.0}, {"boundary", "periodic"}};
  const json qpe_sweep = {{"ancilla_min", 6},
                          {"ancilla_max", 15},
                          {"repetitions", 10},
                          {"dither", true}};
  json j;
  if (name == "figure3_tfim") {
    j = {{"preset", name},
         {"source",
          {{"model", tfim_model},
           {"dominant", {0, 1}},
           {"weights", {0.4, 0.4}}}},
         {"k_modes", 2},
         {"epsilon", 1e-3},
         {"schedule",
          {{"gamma", 1.0}, {"t0_gap", 2.0}, {"n0", 3000}, {"n_level", 2000}}},
         {"trials", 10},
         {"seed", 1},
         {"qpe", qpe_sweep},
         {"out", "figure3_tfim.csv"}};
  } else if (name == "figure3_hubbard") {
    j = {{"preset", name},
         {"source",
          {{"model",
            {{"kind", "hubbard"}, {"sites", 4}, {"t", 1.0}, {"u", 10.0}}},
           {"dominant", {0, 1}},
           {"weights", {0.4, 0.4}}}},
         {"k_modes", 2},
         {"epsilon", 2.5e-4},
         {"schedule",
          {{"gamma", 1.0}, {"t0_gap", 10.0}, {"n0", 40000}, {"n_level", 2000}}},
         {"trials", 10},
         {"seed", 1},
         {"qpe", qpe_sweep},
         {"out", "figure3_hubbard.csv"}};
  } else if (name == "figure3_synthetic") {
    // Two modes at -pi/5 and 3*pi/10; zero residual exercises the derived
    // schedule defaults.
    j = {{"preset", name},
         {"source",
          {{"spectrum",
            {{"eigenvalues", {-0.6283185307179586, 0.9424777960769379}}}},
           {"dominant", {0, 1}},
           {"weights", {0.6, 0.4}}}},
         {"k_modes", 2},
         {"epsilon", 1e-3},
         {"trials", 10},
         {"seed", 1},
         {"qpe", qpe_sweep},
         {"out", "figure3_synthetic.csv"}};
  } else if (name == "wrong_k") {
    j = {{"preset", name},
         {"source",
          {{"model", tfim_model},
           {"dominant", {0, 1}},
           {"weights", {0.7, 0.2}}}},
         {"k_modes", 2},
         {"epsilon", 1e-3},
         {"schedule",
          {{"gamma", 1.0}, {"t0_gap", 10.0}, {"n0", 3000}, {"n_level", 2000}}},
         {"trials", 10},
         {"seed", 1},
         {"qpe", qpe_sweep},
         {"out", "wrong_k.csv"}};
  } else if (name == "small_pmin") {
    j = {{"preset", name},
         {"source",
          {{"model", tfim_model},
           {"dominant", {0, 1}},
           {"weights", {0.21, 0.6}}}},
         {"k_modes", 2},
         {"epsilon", 1e-3},
         {"schedule",
          {{"gamma", 1.0}, {"t0_gap", 10.0}, {"n0", 3000}, {"n_level", 2000}}},
         {"trials", 10},
         {"seed", 1},
         {"qpe", qpe_sweep},
         {"out", "small_pmin.csv"}};
  } else if (name == "landscape_tfim") {
    j = {{"preset", name},
         {"source",
          {{"model", tfim_model},
           {"dominant", {0, 1}},
           {"weights", {0.4, 0.4}}}},
         {"k_modes", 2},
         {"schedule",
          {{"gamma", 1.0}, {"t0_gap", 2.0}, {"n0", 3000}, {"n_level", 2000}}},
         {"trials", 10},
         {"seed", 1},
         {"landscape", {{"levels", 4}, {"slice_points", 400}}},
         {"out", "landscape_tfim"}};
  } else {
    throw std::invalid_argument("preset_config: unknown preset " + name);
  }
  return j.dump();
}

ExperimentConfig preset_config(const std::string& name) {
  return parse_experiment_config(preset_config_text(name));
}

}  // namespace mmqcels
