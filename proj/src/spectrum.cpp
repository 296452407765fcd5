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

#include "mmqcels/spectrum.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmqcels {

namespace {
constexpr double kPi = 3.14159265358979323846;

int bit(int state, int i) { return (state >> i) & 1; }

// Z eigenvalue: +1 on an empty/0 bit, -1 on a set bit.
double zsign(int state, int i) { return bit(state, i) ? -1.0 : 1.0; }
}  // namespace

Eigen::MatrixXd build_tfim(int sites, double g, Boundary boundary) {
  if (sites < 1 || sites > 12) {
    throw std::invalid_argument("build_tfim: sites must be in 1..12");
  }
  const int dim = 1 << sites;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int s = 0; s < dim; ++s) {
    double zz = 0.0;
    for (int i = 0; i + 1 < sites; ++i) zz += zsign(s, i) * zsign(s, i + 1);
    if (boundary == Boundary::kPeriodic) zz += zsign(s, sites - 1) * zsign(s, 0);
    h(s, s) = -zz;
    for (int i = 0; i < sites; ++i) h(s ^ (1 << i), s) -= g;  // -g X_i
  }
  return h;
}

Eigen::MatrixXd build_hubbard(int sites, double t, double u) {
  if (sites < 1 || sites > 5) {
    throw std::invalid_argument("build_hubbard: sites must be in 1..5");
  }
  const int modes = 2 * sites;  // spin-up block first, then spin-down
  const int dim = 1 << modes;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int s = 0; s < dim; ++s) {
    double diag = 0.0;
    for (int j = 0; j < sites; ++j) {
      diag += u * (bit(s, j) - 0.5) * (bit(s, sites + j) - 0.5);
    }
    h(s, s) = diag;
    // c^+_q c_{q'} moves one fermion; the Jordan-Wigner sign counts occupied
    // modes strictly between q and q'.  Hops are between adjacent modes inside
    // a spin block, so the string is always empty, but keep the generic count.
    for (int spin = 0; spin < 2; ++spin) {
      for (int j = 0; j + 1 < sites; ++j) {
        int q = spin * sites + j;
        for (auto [from, to] : {std::pair{q + 1, q}, std::pair{q, q + 1}}) {
          if (!bit(s, from) || bit(s, to)) continue;
          int target = s ^ (1 << from) ^ (1 << to);
          int parity = 0;
          for (int m = std::min(from, to) + 1; m < std::max(from, to); ++m) {
            parity += bit(s, m);
          }
          h(target, s) += (parity % 2 ? 1.0 : -1.0) * t;
        }
      }
    }
  }
  return h;
}

Eigen::MatrixXd build_model(const HamiltonianModel& model) {
  switch (model.kind) {
    case HamiltonianModel::Kind::kTfim:
      return build_tfim(model.sites, model.g, model.boundary);
    case HamiltonianModel::Kind::kHubbard:
      return build_hubbard(model.sites, model.t, model.u);
  }
  throw std::invalid_argument("build_model: unknown kind");
}

std::vector<double> normalize_spectrum(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols() || h.rows() == 0) {
    throw std::invalid_argument("normalize_spectrum: square matrix required");
  }
  double scale = std::max(h.cwiseAbs().maxCoeff(), 1.0);
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("normalize_spectrum: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("normalize_spectrum: eigensolver failed");
  }
  Eigen::VectorXd vals = solver.eigenvalues();  // ascending
  double norm = std::max(std::abs(vals[0]), std::abs(vals[vals.size() - 1]));
  std::vector<double> out(vals.size());
  if (norm == 0.0) return out;
  double factor = kPi / (4.0 * norm);
  for (int i = 0; i < vals.size(); ++i) out[i] = vals[i] * factor;
  return out;
}

Spectrum assign_overlaps(const std::vector<double>& eigenvalues,
                         const DominantSpec& dominant,
                         const std::vector<double>& weights,
                         const ResidualSpec& residual) {
  const int m = static_cast<int>(eigenvalues.size());
  const int k = dominant.count();
  if (k == 0 || k > m) throw std::invalid_argument("assign_overlaps: bad dominant size");
  if (static_cast<int>(weights.size()) != k) {
    throw std::invalid_argument("assign_overlaps: one weight per dominant mode");
  }
  std::vector<bool> is_dominant(m, false);
  for (int idx : dominant.indices) {
    if (idx < 0 || idx >= m) throw std::invalid_argument("assign_overlaps: index out of range");
    if (is_dominant[idx]) throw std::invalid_argument("assign_overlaps: repeated index");
    is_dominant[idx] = true;
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      if (std::abs(eigenvalues[dominant.indices[a]] -
                   eigenvalues[dominant.indices[b]]) < 1e-12) {
        throw std::invalid_argument(
            "assign_overlaps: dominant eigenvalues are degenerate");
      }
    }
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("assign_overlaps: negative weight");
    total += w;
  }
  if (total > 1.0 + 1e-12) {
    throw std::invalid_argument("assign_overlaps: weights exceed unit mass");
  }
  double rest = std::max(0.0, 1.0 - total);

  Spectrum out;
  out.eigenvalues = eigenvalues;
  out.overlaps.assign(m, 0.0);
  for (int a = 0; a < k; ++a) out.overlaps[dominant.indices[a]] = weights[a];

  switch (residual.policy) {
    case ResidualSpec::Policy::kUniform: {
      if (m == k) {
        if (rest > 1e-12) {
          throw std::invalid_argument("assign_overlaps: residual mass with no modes left");
        }
        break;
      }
      double share = rest / (m - k);
      for (int i = 0; i < m; ++i)
        if (!is_dominant[i]) out.overlaps[i] = share;
      break;
    }
    case ResidualSpec::Policy::kSingleMode: {
      int target = residual.mode;
      if (target < 0) {
        for (int i = 0; i < m; ++i)
          if (!is_dominant[i]) {
            target = i;
            break;
          }
      }
      if (target < 0 || target >= m || is_dominant[target]) {
        throw std::invalid_argument("assign_overlaps: bad single-mode target");
      }
      out.overlaps[target] = rest;
      break;
    }
    case ResidualSpec::Policy::kCustom: {
      if (static_cast<int>(residual.weights.size()) != m - k) {
        throw std::invalid_argument(
            "assign_overlaps: custom residual needs one weight per non-dominant mode");
      }
      double wsum = 0.0;
      for (double w : residual.weights) {
        if (w < 0.0) throw std::invalid_argument("assign_overlaps: negative residual weight");
        wsum += w;
      }
      if (rest > 1e-12 && wsum <= 0.0) {
        throw std::invalid_argument("assign_overlaps: zero custom residual weights");
      }
      int next = 0;
      for (int i = 0; i < m; ++i) {
        if (is_dominant[i]) continue;
        out.overlaps[i] = wsum > 0.0 ? rest * residual.weights[next] / wsum : 0.0;
        ++next;
      }
      break;
    }
  }
  return out;
}

SpectrumStats spectrum_stats(const Spectrum& spectrum, const DominantSpec& dominant) {
  const int m = spectrum.size();
  SpectrumStats stats;
  stats.p_min = std::numeric_limits<double>::infinity();
  stats.min_gap = std::numeric_limits<double>::infinity();
  std::vector<bool> is_dominant(m, false);
  for (int idx : dominant.indices) {
    if (idx < 0 || idx >= m) throw std::invalid_argument("spectrum_stats: index out of range");
    is_dominant[idx] = true;
    stats.p_min = std::min(stats.p_min, spectrum.overlaps[idx]);
  }
  for (int a = 0; a < dominant.count(); ++a) {
    for (int b = a + 1; b < dominant.count(); ++b) {
      stats.min_gap = std::min(stats.min_gap,
                               std::abs(spectrum.eigenvalues[dominant.indices[a]] -
                                        spectrum.eigenvalues[dominant.indices[b]]));
    }
  }
  stats.residual = 0.0;
  for (int i = 0; i < m; ++i)
    if (!is_dominant[i]) stats.residual += spectrum.overlaps[i];
  return stats;
}

namespace {
void validate_spectrum(const Spectrum& s) {
  if (s.eigenvalues.size() != s.overlaps.size() || s.eigenvalues.empty()) {
    throw std::invalid_argument("spectrum: eigenvalue/overlap size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
    if (std::abs(s.eigenvalues[i]) > kPi + 1e-12) {
      throw std::invalid_argument("spectrum: eigenvalue outside [-pi, pi]");
    }
    if (i > 0 && s.eigenvalues[i] < s.eigenvalues[i - 1]) {
      throw std::invalid_argument("spectrum: eigenvalues not ascending");
    }
    if (s.overlaps[i] < -1e-15) throw std::invalid_argument("spectrum: negative overlap");
    total += s.overlaps[i];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("spectrum: overlaps do not sum to one");
  }
}
}  // namespace

std::string spectrum_to_json(const Spectrum& spectrum) {
  nlohmann::json j;
  j["eigenvalues"] = spectrum.eigenvalues;
  j["overlaps"] = spectrum.overlaps;
  return j.dump();
}

Spectrum spectrum_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("spectrum json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("eigenvalues") || !j.contains("overlaps")) {
    throw std::invalid_argument("spectrum json: expected eigenvalues/overlaps");
  }
  Spectrum s;
  try {
    s.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    s.overlaps = j.at("overlaps").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("spectrum json: ") + e.what());
  }
  validate_spectrum(s);
  return s;
}

}  // namespace mmqcels
