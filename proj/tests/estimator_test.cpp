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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "mmqcels/estimator.hpp"
#include "oracles.hpp"

using namespace mmqcels;

namespace {
const double kPi = std::acos(-1.0);

Spectrum two_mode(double l1 = -0.3, double l2 = 0.45, double p1 = 0.6) {
  Spectrum s;
  s.eigenvalues = {l1, l2};
  s.overlaps = {p1, 1.0 - p1};
  return s;
}

// Hand-built dataset with arbitrary complex values (diagnostic override shape).
Dataset raw_dataset(std::vector<double> t, std::vector<std::complex<double>> z) {
  Dataset d;
  d.density = make_time_density(1.0, 6.0);
  d.t = std::move(t);
  d.z = std::move(z);
  for (double v : d.t) {
    d.ledger.t_total += std::abs(v);
    d.ledger.t_max = std::max(d.ledger.t_max, std::abs(v));
  }
  d.ledger.shots = 2 * static_cast<std::int64_t>(d.t.size());
  return d;
}

Dataset synthetic_signal(const std::vector<double>& t,
                         const std::vector<std::complex<double>>& r,
                         const std::vector<double>& theta) {
  std::vector<std::complex<double>> z(t.size());
  for (std::size_t n = 0; n < t.size(); ++n) {
    std::complex<double> v(0.0, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k)
      v += r[k] * std::polar(1.0, -theta[k] * t[n]);
    z[n] = v;
  }
  std::vector<double> tt = t;
  return raw_dataset(std::move(tt), std::move(z));
}

SpectrumStats stats_of(double p_min, double gap, double residual) {
  SpectrumStats s;
  s.p_min = p_min;
  s.min_gap = gap;
  s.residual = residual;
  return s;
}
}  // namespace

TEST_CASE("loss vanishes on an exact fit and is two at zero amplitudes") {
  std::vector<double> t = {-1.3, -0.2, 0.7, 2.9, 4.1};
  std::vector<std::complex<double>> r = {{0.55, 0.1}, {0.4, -0.05}};
  std::vector<double> theta = {-0.4, 0.8};
  Dataset exact = synthetic_signal(t, r, theta);
  CHECK(loss(exact, r, theta) < 1e-20);

  Spectrum s = two_mode();
  Dataset shots = generate_dataset(s, make_time_density(3.0, 1.0), 300, 8);
  CHECK(loss(shots, {}, {}) == 2.0);
}

TEST_CASE("loss matches the direct definition on random inputs") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), 5, 21);
  std::mt19937 gen(13);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::complex<double>> r = {{unif(gen), unif(gen)},
                                           {unif(gen), unif(gen)}};
    std::vector<double> theta = {unif(gen), unif(gen)};
    double want = oracles::direct_loss(data.t, data.z, r, theta);
    CHECK(loss(data, r, theta) == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("single-mode amplitude solve is the matched filter") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), 400, 3);
  double theta = 0.31;
  auto r = solve_r_given_theta(data, {theta});
  std::complex<double> b(0.0, 0.0);
  for (int n = 0; n < data.size(); ++n)
    b += data.z[n] * std::polar(1.0, theta * data.t[n]);
  b /= static_cast<double>(data.size());
  CHECK(std::abs(r[0] - b) < 1e-14);
}

TEST_CASE("amplitude solve recovers a noiseless single mode exactly") {
  std::vector<double> t;
  for (int i = 0; i < 60; ++i) t.push_back(-3.0 + 0.1 * i);
  Dataset data = synthetic_signal(t, {{0.7, 0.0}}, {0.9});
  auto r = solve_r_given_theta(data, {0.9});
  CHECK(std::abs(r[0] - std::complex<double>(0.7, 0.0)) < 1e-12);
}

TEST_CASE("amplitude solve agrees with gradient descent") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(4.0, 1.0), 50, 17);
  std::vector<double> theta = {-0.35, 0.52};
  auto fast = solve_r_given_theta(data, theta);
  auto slow = oracles::descend_r(data.t, data.z, theta);
  REQUIRE(fast.size() == 2);
  CHECK(std::abs(fast[0] - slow[0]) < 1e-8);
  CHECK(std::abs(fast[1] - slow[1]) < 1e-8);
}

TEST_CASE("amplitude solve sits at a local minimum in every direction") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(3.0, 1.0), 120, 29);
  std::vector<double> theta = {-0.32, 0.41};
  auto r = solve_r_given_theta(data, theta);
  double at = loss(data, r, theta);
  std::mt19937 gen(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    auto moved = r;
    for (auto& v : moved)
      v += 1e-4 * std::complex<double>(normal(gen), normal(gen));
    CHECK(loss(data, moved, theta) >= at - 1e-12);
  }
}

TEST_CASE("amplitude solve rejects degenerate and overdetermined phases") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), 30, 5);
  CHECK_THROWS_AS(solve_r_given_theta(data, {0.4, 0.4}), degenerate_modes_error);
  Dataset tiny = generate_dataset(s, make_time_density(2.0, 1.0), 1, 5);
  CHECK_THROWS_AS(solve_r_given_theta(tiny, {0.1, 0.2}), std::invalid_argument);
}

TEST_CASE("level search finds a noiseless single mode to high precision") {
  Spectrum s;
  s.eigenvalues = {0.325};
  s.overlaps = {1.0};
  Dataset data = generate_dataset(s, make_time_density(5.0, 1.0), 500, 11,
                                  MeasurementMode::kExact);
  LevelFit fit = minimize_level(data, {{-kPi, kPi}});
  REQUIRE(fit.estimate.phases.size() == 1);
  CHECK(std::abs(fit.estimate.phases[0] - 0.325) < 1e-8);
  CHECK(std::abs(fit.estimate.amplitudes[0] - std::complex<double>(1.0, 0.0)) < 1e-8);
  CHECK(fit.loss < 1e-16);
}

TEST_CASE("level search recovers both modes of a noiseless pair") {
  Spectrum s = two_mode(-0.3, 0.45, 0.6);
  Dataset data = generate_dataset(s, make_time_density(6.0, 1.0), 800, 23,
                                  MeasurementMode::kExact);
  LevelFit fit = minimize_level(data, {{-kPi, kPi}, {-kPi, kPi}});
  REQUIRE(fit.estimate.phases.size() == 2);
  CHECK(std::abs(fit.estimate.phases[0] + 0.3) < 1e-6);
  CHECK(std::abs(fit.estimate.phases[1] - 0.45) < 1e-6);
  CHECK(std::abs(fit.estimate.amplitudes[0] - std::complex<double>(0.6, 0.0)) < 1e-6);
  CHECK(std::abs(fit.estimate.amplitudes[1] - std::complex<double>(0.4, 0.0)) < 1e-6);
  CHECK(fit.loss < 1e-14);
}

TEST_CASE("level search matches a brute-force scan on shot data") {
  Spectrum s;
  s.eigenvalues = {-0.15};
  s.overlaps = {1.0};
  Dataset data = generate_dataset(s, make_time_density(5.0, 1.0), 900, 37);
  LevelFit fit = minimize_level(data, {{-kPi, kPi}});
  // Reference: direct scan at resolution 1e-4 of s2 - |b(theta)|^2.
  double best_theta = 0.0, best_val = 1e300;
  for (double theta = -kPi; theta <= kPi; theta += 1e-4) {
    std::complex<double> b(0.0, 0.0);
    for (int n = 0; n < data.size(); ++n)
      b += data.z[n] * std::polar(1.0, theta * data.t[n]);
    double val = -std::norm(b / static_cast<double>(data.size()));
    if (val < best_val) {
      best_val = val;
      best_theta = theta;
    }
  }
  CHECK(std::abs(fit.estimate.phases[0] - best_theta) < 2e-4);
}

TEST_CASE("level search respects the amplitude norm constraint when asked") {
  std::vector<double> t;
  RngStream rng(41);
  TimeDensity d = make_time_density(4.0, 1.0);
  for (int i = 0; i < 400; ++i) t.push_back(draw_time(d, rng));
  // Total amplitude 1.9: the unconstrained fit wants |r|_1 well above 1.
  Dataset data = synthetic_signal(t, {{1.1, 0.0}, {0.8, 0.0}}, {-0.3, 0.45});
  SearchConfig plain;
  LevelFit noconstraint = minimize_level(data, {{-kPi, 0.0}, {0.0, kPi}}, plain);
  double norm1 = std::abs(noconstraint.estimate.amplitudes[0]) +
                 std::abs(noconstraint.estimate.amplitudes[1]);
  CHECK(norm1 > 1.5);
  SearchConfig constrained;
  constrained.l1_constraint = true;
  LevelFit capped = minimize_level(data, {{-kPi, 0.0}, {0.0, kPi}}, constrained);
  double norm2 = std::abs(capped.estimate.amplitudes[0]) +
                 std::abs(capped.estimate.amplitudes[1]);
  CHECK(norm2 <= 1.0 + 1e-12);
  CHECK(capped.loss >= noconstraint.loss);
}

TEST_CASE("level search output is deterministic") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(8.0, 1.0), 600, 53);
  std::vector<Interval> iv = {{-1.0, 0.1}, {0.1, 1.2}};
  LevelFit a = minimize_level(data, iv);
  LevelFit b = minimize_level(data, iv);
  CHECK(a.estimate.phases[0] == b.estimate.phases[0]);
  CHECK(a.estimate.phases[1] == b.estimate.phases[1]);
  CHECK(a.estimate.amplitudes[0] == b.estimate.amplitudes[0]);
  CHECK(a.loss == b.loss);
}

TEST_CASE("schedule arithmetic doubles times and floors the level count") {
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 1.0;
  ov.has_n0 = true;
  ov.n0 = 2500;
  Schedule sched = build_schedule(stats_of(1.0, kPi / 2, 0.0), 0.00625, 0.1, 0.5, ov);
  // q defaults to 0.05, so q/(eps*T0) = 8 and l = 3.
  CHECK(sched.q == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(sched.levels == 3);
  REQUIRE(sched.t_j.size() == 4);
  CHECK(sched.t_j[0] == 1.0);
  CHECK(sched.t_j[1] == 2.0);
  CHECK(sched.t_j[2] == 4.0);
  CHECK(sched.t_j[3] == 8.0);
  CHECK(sched.n_j[0] == 2500);
  for (std::size_t j = 1; j < sched.n_j.size(); ++j) CHECK(sched.n_j[j] >= 2000);

  Schedule floor = build_schedule(stats_of(1.0, kPi / 2, 0.0), 10.0, 0.1, 0.5, ov);
  CHECK(floor.levels == 1);
}

TEST_CASE("schedule defaults follow the dominance constants") {
  Schedule sched = build_schedule(stats_of(0.4, 0.5, 0.1), 1e-3, 0.1, 0.5);
  CHECK(sched.q == doctest::Approx(0.8).epsilon(1e-12));
  // gamma = max(1, ln(1/min(p q, p(p - 3R)))) = ln(25)
  CHECK(sched.gamma == doctest::Approx(std::log(25.0)).epsilon(1e-12));
  CHECK(sched.t0 == doctest::Approx(2.0 / 0.5).epsilon(1e-12));
  CHECK(sched.n0 >= 2000);
  CHECK(sched.levels >= 1);
  CHECK(static_cast<int>(sched.t_j.size()) == sched.levels + 1);
  CHECK(static_cast<int>(sched.n_j.size()) == sched.levels + 1);

  // Single dominant mode: no gap scale, falls back to the full phase range.
  Schedule solo = build_schedule(
      stats_of(1.0, std::numeric_limits<double>::infinity(), 0.0), 1e-2, 0.1, 0.5);
  CHECK(solo.t0 > 0.0);
  CHECK(std::isfinite(solo.t0));
}

TEST_CASE("schedule requires overrides when dominance fails") {
  SpectrumStats bad = stats_of(0.4, 0.5, 0.2);  // 3R = 0.6 > p_min
  CHECK_THROWS_AS(build_schedule(bad, 1e-3, 0.1, 0.5), std::invalid_argument);
  ScheduleOverrides ov;
  ov.has_gamma = true;
  ov.gamma = 1.0;
  ov.has_t0_gap = true;
  ov.t0_gap_multiple = 2.0;
  ov.has_n0 = true;
  ov.n0 = 3000;
  ov.has_n_level = true;
  ov.n_level = 2000;
  ov.has_levels = true;
  ov.levels = 6;
  Schedule sched = build_schedule(bad, 1e-3, 0.1, 0.5, ov);
  CHECK(sched.gamma == 1.0);
  CHECK(sched.t0 == doctest::Approx(2.0 / 0.5).epsilon(1e-14));
  CHECK(sched.n0 == 3000);
  CHECK(sched.levels == 6);
  for (std::size_t j = 1; j < sched.n_j.size(); ++j) CHECK(sched.n_j[j] == 2000);
}

TEST_CASE("multi-level run pins a single mode within the scheduled budget") {
  Spectrum s;
  s.eigenvalues = {0.4137};
  s.overlaps = {1.0};
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 2.0;
  ov.has_n0 = true;
  ov.n0 = 2000;
  ov.has_n_level = true;
  ov.n_level = 2000;
  Schedule sched = build_schedule(
      stats_of(1.0, std::numeric_limits<double>::infinity(), 0.0), 1e-3, 0.1, 0.5, ov);
  int hits = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    MmqcelsResult res = mm_qcels(s, 1, sched, 1000 + trial);
    if (std::abs(res.estimate.phases[0] - 0.4137) <= 1e-3) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("multi-level run shrinks intervals and tightens both modes") {
  Spectrum s = two_mode(-0.3, 0.45, 0.6);
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 3.0;
  ov.has_n0 = true;
  ov.n0 = 3000;
  ov.has_n_level = true;
  ov.n_level = 2000;
  ov.has_levels = true;
  ov.levels = 4;
  Schedule sched = build_schedule(stats_of(0.4, 0.75, 0.0), 1e-3, 0.1, 0.5, ov);
  MmqcelsResult res = mm_qcels(s, 2, sched, 777);

  REQUIRE(static_cast<int>(res.levels.size()) == sched.levels + 1);
  for (std::size_t j = 0; j < res.levels.size(); ++j) {
    const auto& rec = res.levels[j];
    CHECK(rec.t_level == doctest::Approx(3.0 * std::pow(2.0, j)).epsilon(1e-15));
    for (int k = 0; k < 2; ++k) {
      CHECK(rec.estimate.intervals[k].contains(rec.estimate.phases[k]));
      if (j > 0) {
        double width = rec.estimate.intervals[k].width();
        double prev = res.levels[j - 1].estimate.intervals[k].width();
        CHECK(width < prev);
        CHECK(width <= 2.0 * kPi / res.levels[j - 1].t_level + 1e-12);
      }
    }
  }
  double err0 = std::max(std::abs(res.levels[0].estimate.phases[0] + 0.3),
                         std::abs(res.levels[0].estimate.phases[1] - 0.45));
  double err_final = std::max(std::abs(res.estimate.phases[0] + 0.3),
                              std::abs(res.estimate.phases[1] - 0.45));
  CHECK(err_final < err0 + 1e-12);
  CHECK(err_final < 1e-2);

  // Ledger: depth bound from the last level, totals across levels.
  CHECK(res.ledger.t_max == sched.gamma * sched.t_j.back());
  double total = 0.0;
  std::int64_t shots = 0;
  for (const auto& rec : res.levels) total = rec.cumulative.t_total, shots = rec.cumulative.shots;
  CHECK(res.ledger.t_total == total);
  CHECK(res.ledger.shots == shots);
  std::int64_t expected_shots = 0;
  for (int n : sched.n_j) expected_shots += 2 * n;
  CHECK(shots == expected_shots);
}

TEST_CASE("multi-level runs are seed reproducible") {
  Spectrum s = two_mode();
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 2.0;
  ov.has_n0 = true;
  ov.n0 = 2000;
  ov.has_n_level = true;
  ov.n_level = 2000;
  ov.has_levels = true;
  ov.levels = 2;
  Schedule sched = build_schedule(stats_of(0.4, 0.75, 0.0), 1e-3, 0.1, 0.5, ov);
  MmqcelsResult a = mm_qcels(s, 2, sched, 4242);
  MmqcelsResult b = mm_qcels(s, 2, sched, 4242);
  CHECK(estimate_to_json(a) == estimate_to_json(b));
  MmqcelsResult c = mm_qcels(s, 2, sched, 4243);
  CHECK(estimate_to_json(a) != estimate_to_json(c));
}

TEST_CASE("exact-signal override drives the error to the optimizer floor") {
  Spectrum s = two_mode(-0.2, 0.35, 0.55);
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 4.0;
  ov.has_n0 = true;
  ov.n0 = 1500;
  ov.has_n_level = true;
  ov.n_level = 1500;
  ov.has_levels = true;
  ov.levels = 2;
  Schedule sched = build_schedule(stats_of(0.45, 0.55, 0.0), 1e-3, 0.1, 0.5, ov);
  MmqcelsResult res = mm_qcels(s, 2, sched, 99, MeasurementMode::kExact);
  CHECK(std::abs(res.estimate.phases[0] + 0.2) < 1e-6);
  CHECK(std::abs(res.estimate.phases[1] - 0.35) < 1e-6);
  CHECK(res.loss < 1e-12);
}

TEST_CASE("diagnostics vanish where the data is exact") {
  Spectrum s = two_mode();
  Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), 500, 61,
                                  MeasurementMode::kExact);
  ModeEstimate est;
  est.phases = {-0.3, 0.45};
  est.amplitudes = {{0.6, 0.0}, {0.4, 0.0}};
  est.intervals = {{-kPi, kPi}, {-kPi, kPi}};
  DiagnosticsReport rep =
      expectation_error_diagnostics(data, s, DominantSpec{{0, 1}}, est);
  CHECK(rep.e_rz == 0.0);
  CHECK(rep.residual_mean == 0.0);
  CHECK(rep.loss_at_truth < 1e-20);
  CHECK(rep.loss_at_optimum ==
        doctest::Approx(loss(data, est.amplitudes, est.phases)).epsilon(1e-13));
}

TEST_CASE("diagnostics match a hand-computed single-mode reduction") {
  Spectrum s = two_mode(-0.25, 0.4, 0.7);
  Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), 2000, 67);
  ModeEstimate est;
  est.phases = {-0.25};  // sits on lambda_1
  est.amplitudes = {{0.7, 0.0}};
  est.intervals = {{-kPi, kPi}};
  DiagnosticsReport rep =
      expectation_error_diagnostics(data, s, DominantSpec{{0}}, est);
  CHECK(rep.e_rr == 0.0);  // no mode pairs with K = 1

  // e_pr = 2 p2 r Re(g_N(th - l2) - F(th - l2)); the (th - l1) term is zero
  // because g_N(0) = F(0) = 1.
  double x = -0.25 - 0.4;
  std::complex<double> g(0.0, 0.0);
  for (int n = 0; n < data.size(); ++n) g += std::polar(1.0, x * data.t[n]);
  g /= static_cast<double>(data.size());
  double want = 2.0 * 0.3 * 0.7 *
                (g.real() - oracles::filter_by_quadrature(data.density.T,
                                                          data.density.gamma, x));
  CHECK(rep.e_pr == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("diagnostic magnitudes shrink like root N") {
  Spectrum s = two_mode(-0.3, 0.45, 0.6);
  ModeEstimate est;
  est.phases = {-0.29, 0.46};
  est.amplitudes = {{0.55, 0.02}, {0.38, -0.01}};
  est.intervals = {{-kPi, kPi}, {-kPi, kPi}};
  std::vector<double> log_n, log_pr, log_rr, log_rz;
  std::uint64_t seed = 100;
  for (int n : {1000, 10000, 100000, 1000000}) {
    double pr = 0.0, rr = 0.0, rz = 0.0;
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
      Dataset data = generate_dataset(s, make_time_density(2.0, 1.0), n, seed++);
      DiagnosticsReport d =
          expectation_error_diagnostics(data, s, DominantSpec{{0, 1}}, est);
      pr += std::abs(d.e_pr);
      rr += std::abs(d.e_rr);
      rz += std::abs(d.e_rz);
    }
    log_n.push_back(std::log10(static_cast<double>(n)));
    log_pr.push_back(std::log10(pr / reps));
    log_rr.push_back(std::log10(rr / reps));
    log_rz.push_back(std::log10(rz / reps));
  }
  CHECK(oracles::fit_line(log_n, log_pr).slope == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(oracles::fit_line(log_n, log_rr).slope == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(oracles::fit_line(log_n, log_rz).slope == doctest::Approx(-0.5).epsilon(0.2));
}

TEST_CASE("estimate json exposes the contract fields") {
  Spectrum s = two_mode();
  ScheduleOverrides ov;
  ov.has_t0 = true;
  ov.t0 = 2.0;
  ov.has_n0 = true;
  ov.n0 = 1000;
  ov.has_n_level = true;
  ov.n_level = 1000;
  ov.has_levels = true;
  ov.levels = 1;
  Schedule sched = build_schedule(stats_of(0.4, 0.75, 0.0), 1e-2, 0.1, 0.5, ov);
  MmqcelsResult res = mm_qcels(s, 2, sched, 1);
  nlohmann::json j = nlohmann::json::parse(estimate_to_json(res));
  REQUIRE(j.contains("theta"));
  CHECK(j["theta"].size() == 2);
  CHECK(j["r_re"].size() == 2);
  CHECK(j["r_im"].size() == 2);
  CHECK(j["intervals"].size() == 2);
  CHECK(j["intervals"][0].size() == 2);
  CHECK(j.contains("t_max"));
  CHECK(j.contains("t_total"));
  CHECK(j.contains("loss"));
}
