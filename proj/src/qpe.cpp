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

#include "mmqcels/qpe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmqcels {
namespace {
const double kPi = std::acos(-1.0);
}  // namespace

double qpe_kernel(int ancillas, double x) {
  x -= std::floor(x + 0.5);  // wrap into [-1/2, 1/2)
  if (x == 0.0) return 1.0;  // removable singularity of the ratio
  const double n = std::ldexp(1.0, ancillas);
  const double s = std::sin(kPi * x);
  const double top = std::sin(n * kPi * x);
  return (top * top) / (n * n * s * s);
}

std::vector<double> qpe_distribution(const Spectrum& spectrum, int ancillas) {
  if (ancillas < 1 || ancillas > 24)
    throw std::invalid_argument("qpe: ancillas outside [1, 24]");
  if (spectrum.size() < 1 ||
      spectrum.overlaps.size() != spectrum.eigenvalues.size())
    throw std::invalid_argument("qpe: malformed spectrum");
  const int n = 1 << ancillas;
  std::vector<double> pr(n, 0.0);
  for (int m = 0; m < spectrum.size(); ++m) {
    const double p = spectrum.overlaps[m];
    if (p == 0.0) continue;
    const double phi = spectrum.eigenvalues[m] / (2.0 * kPi);
    for (int j = 0; j < n; ++j)
      pr[j] += p * qpe_kernel(ancillas, static_cast<double>(j) / n - phi);
  }
  return pr;
}

QpeEstimate qpe_estimate_min(const Spectrum& spectrum, const QpeConfig& config,
                             std::uint64_t seed) {
  if (config.repetitions < 1)
    throw std::invalid_argument("qpe: repetitions must be positive");
  const std::vector<double> pr = qpe_distribution(spectrum, config.ancillas);
  const int n = static_cast<int>(pr.size());
  std::vector<double> cdf(pr.size());
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += pr[j];
    cdf[j] = acc;
  }

  QpeEstimate est;
  const double depth = std::ldexp(1.0, config.ancillas) - 1.0;
  est.ledger.t_max = depth;
  est.ledger.t_total = depth * config.repetitions;
  est.ledger.shots = config.repetitions;

  RngStream root(seed);
  est.draws.reserve(config.repetitions);
  for (int rep = 0; rep < config.repetitions; ++rep) {
    RngStream sub = root.substream(static_cast<std::uint64_t>(rep));
    const double u = sub.uniform() * acc;
    int j = static_cast<int>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (j >= n) j = n - 1;
    double theta = 2.0 * kPi * j / n;
    if (theta >= kPi) theta -= 2.0 * kPi;
    est.draws.push_back(theta);
  }
  est.theta = *std::min_element(est.draws.begin(), est.draws.end());
  return est;
}

}  // namespace mmqcels
