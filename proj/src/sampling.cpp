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

#include "mmqcels/sampling.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mmqcels {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kSeamST = 50.0;  // beyond |x*T| = 50 the Gaussian envelope underflows

// Iterative adaptive Simpson with Richardson correction on [a, b].
double adaptive_simpson(double s, double a, double b, double tol) {
  auto f = [s](double u) { return std::exp(-0.5 * u * u) * std::cos(s * u); };
  struct Seg {
    double a, b, fa, fm, fb, whole;
    int depth;
  };
  std::vector<Seg> stack;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  stack.push_back({a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 52});
  double total = 0.0;
  while (!stack.empty()) {
    Seg seg = stack.back();
    stack.pop_back();
    double m = 0.5 * (seg.a + seg.b);
    double flm = f(0.5 * (seg.a + m)), frm = f(0.5 * (m + seg.b));
    double left = (m - seg.a) / 6.0 * (seg.fa + 4.0 * flm + seg.fm);
    double right = (seg.b - m) / 6.0 * (seg.fm + 4.0 * frm + seg.fb);
    double err = left + right - seg.whole;
    if (seg.depth <= 0 || std::abs(err) < 15.0 * tol) {
      total += left + right + err / 15.0;
    } else {
      stack.push_back({seg.a, m, seg.fa, flm, seg.fm, left, seg.depth - 1});
      stack.push_back({m, seg.b, seg.fm, frm, seg.fb, right, seg.depth - 1});
    }
  }
  return total;
}
}  // namespace

TimeDensity make_time_density(double T, double gamma) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("make_time_density: T must be positive");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("make_time_density: gamma must be positive");
  }
  TimeDensity d;
  d.T = T;
  d.gamma = gamma;
  d.mass = std::erf(gamma / std::sqrt(2.0));
  return d;
}

double filter_value(const TimeDensity& density, double x) {
  double s = std::abs(x) * density.T;  // F depends on (|x| T, gamma) only
  if (s >= kSeamST) return 0.0;
  // Split the oscillatory integrand so each segment sees O(1) periods.
  double width = density.gamma;
  int pieces = 1 + static_cast<int>(s * width / kPi);
  double acc = 0.0;
  for (int i = 0; i < pieces; ++i) {
    double a = width * i / pieces, b = width * (i + 1) / pieces;
    acc += adaptive_simpson(s, a, b, 1e-13 / pieces);
  }
  return 2.0 * acc / (density.mass * std::sqrt(2.0 * kPi));
}

std::complex<double> signal_expectation(const Spectrum& spectrum, double t) {
  double re = 0.0, im = 0.0;
  const std::size_t m = spectrum.eigenvalues.size();
  for (std::size_t i = 0; i < m; ++i) {
    double phase = spectrum.eigenvalues[i] * t;
    re += spectrum.overlaps[i] * std::cos(phase);
    im -= spectrum.overlaps[i] * std::sin(phase);
  }
  return {re, im};
}

double draw_time(const TimeDensity& density, RngStream& rng) {
  for (;;) {
    double z = rng.normal();
    if (std::abs(z) <= density.gamma) return z * density.T;
  }
}

int hadamard_shot(const Spectrum& spectrum, double t, Quadrature quadrature,
                  RngStream& rng) {
  std::complex<double> s = signal_expectation(spectrum, t);
  double value = quadrature == Quadrature::kX ? s.real() : s.imag();
  return rng.uniform() < 0.5 * (1.0 + value) ? 1 : -1;
}

Dataset generate_dataset(const Spectrum& spectrum, const TimeDensity& density,
                         int n_samples, std::uint64_t seed,
                         MeasurementMode mode) {
  if (n_samples <= 0) {
    throw std::invalid_argument("generate_dataset: n_samples must be positive");
  }
  Dataset data;
  data.density = density;
  data.seed = seed;
  data.t.resize(n_samples);
  data.z.resize(n_samples);
  RngStream root(seed);
  for (int n = 0; n < n_samples; ++n) {
    RngStream sub = root.substream(static_cast<std::uint64_t>(n));
    double t = draw_time(density, sub);
    data.t[n] = t;
    std::complex<double> s = signal_expectation(spectrum, t);
    if (mode == MeasurementMode::kExact) {
      data.z[n] = s;
    } else {
      // Same draw order as two hadamard_shot calls: one uniform per shot.
      double x = sub.uniform() < 0.5 * (1.0 + s.real()) ? 1.0 : -1.0;
      double y = sub.uniform() < 0.5 * (1.0 + s.imag()) ? 1.0 : -1.0;
      data.z[n] = {x, y};
    }
    data.ledger.t_total += std::abs(t);
    data.ledger.t_max = std::max(data.ledger.t_max, std::abs(t));
  }
  data.ledger.shots = 2 * static_cast<std::int64_t>(n_samples);
  return data;
}

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::ostringstream out;
  nlohmann::json header;
  header["T"] = dataset.density.T;
  header["gamma"] = dataset.density.gamma;
  header["seed"] = dataset.seed;
  header["N"] = dataset.size();
  out << header.dump() << '\n';
  for (int n = 0; n < dataset.size(); ++n) {
    nlohmann::json rec;
    rec["n"] = n + 1;
    rec["t"] = dataset.t[n];
    rec["zr"] = dataset.z[n].real();
    rec["zi"] = dataset.z[n].imag();
    out << rec.dump() << '\n';
  }
  return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("dataset jsonl: empty input");
  }
  Dataset data;
  int n_expected = 0;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    data.density = make_time_density(header.at("T").get<double>(),
                                     header.at("gamma").get<double>());
    data.seed = header.at("seed").get<std::uint64_t>();
    n_expected = header.at("N").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("dataset jsonl header: ") + e.what());
  }
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      if (rec.at("n").get<int>() != row + 1) {
        throw std::invalid_argument("dataset jsonl: records out of order");
      }
      double t = rec.at("t").get<double>();
      data.t.push_back(t);
      data.z.emplace_back(rec.at("zr").get<double>(), rec.at("zi").get<double>());
      data.ledger.t_total += std::abs(t);
      data.ledger.t_max = std::max(data.ledger.t_max, std::abs(t));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("dataset jsonl record: ") + e.what());
    }
    ++row;
  }
  if (row != n_expected) {
    throw std::invalid_argument("dataset jsonl: sample count differs from header");
  }
  data.ledger.shots = 2 * static_cast<std::int64_t>(row);
  return data;
}

}  // namespace mmqcels
