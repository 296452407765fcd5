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

#include "mmqcels/estimator.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <utility>

namespace mmqcels {
namespace {

using cplx = std::complex<double>;

const double kPi = std::acos(-1.0);
const double kInf = std::numeric_limits<double>::infinity();

// Grid tuples whose Gram matrix develops a Cholesky pivot below this are
// treated as phase collisions and skipped.
const double kDegeneratePivot2 = 1e-10;

// LDLT pivot ratio below which the generic K x K solve refuses to answer.
const double kSingularRatio = 1e-12;

// Dense grids are tractable up to four modes; the tuple count grows as
// grid_points^K beyond that.
const int kMaxModes = 4;

double mean_abs_square(const Dataset& dataset) {
  double s = 0.0;
  for (const cplx& z : dataset.z) s += std::norm(z);
  return s / static_cast<double>(dataset.size());
}

// --- generic evaluation at arbitrary phases (used by the simplex refiner) ---

struct NormalSystem {
  double s2 = 0.0;
  Eigen::MatrixXcd g;
  Eigen::VectorXcd b;
};

NormalSystem build_normal(const Dataset& dataset,
                          const std::vector<double>& theta) {
  const int k = static_cast<int>(theta.size());
  const int n = dataset.size();
  NormalSystem sys;
  sys.s2 = mean_abs_square(dataset);
  sys.b = Eigen::VectorXcd::Zero(k);
  sys.g = Eigen::MatrixXcd::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < k; ++a)
      sys.b(a) += dataset.z[i] * std::polar(1.0, theta[a] * dataset.t[i]);
  }
  sys.b /= static_cast<double>(n);
  for (int a = 0; a < k; ++a) {
    sys.g(a, a) = 1.0;
    for (int c = a + 1; c < k; ++c) {
      cplx acc(0.0, 0.0);
      for (int i = 0; i < n; ++i)
        acc += std::polar(1.0, (theta[a] - theta[c]) * dataset.t[i]);
      acc /= static_cast<double>(n);
      sys.g(a, c) = acc;
      sys.g(c, a) = std::conj(acc);
    }
  }
  return sys;
}

Eigen::VectorXcd solve_normal(const NormalSystem& sys) {
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(sys.g);
  Eigen::VectorXd d = ldlt.vectorD().real();
  if (ldlt.info() != Eigen::Success ||
      d.minCoeff() <= kSingularRatio * d.maxCoeff()) {
    throw degenerate_modes_error(
        "normal equations singular: two phases coincide to working precision");
  }
  return ldlt.solve(sys.b);
}

// --- grid scan with incremental Cholesky over sorted phase tuples ---

struct ModeGrid {
  std::vector<double> theta;
  std::vector<cplx> b;
  double step = 0.0;
  double bmax2 = 0.0;
};

// g((theta_a[i] - theta_b[j])) for one mode pair a < b.  Equal grid steps give
// a lattice of differences indexed by i - j; unequal steps fall back to the
// dense table.
struct PairTable {
  bool lattice = false;
  int nb = 0;
  std::vector<cplx> v;
  double max_abs = 0.0;

  cplx at(int ia, int ib) const {
    return lattice ? v[static_cast<std::size_t>(ia - ib + nb - 1)]
                   : v[static_cast<std::size_t>(ia) * nb + ib];
  }
};

ModeGrid make_grid(const Dataset& dataset, const Interval& interval,
                   int grid_points) {
  ModeGrid grid;
  const double width = interval.width();
  const int n_g = width > 0.0 ? grid_points : 1;
  grid.theta.resize(n_g);
  grid.step = n_g > 1 ? width / (n_g - 1) : 0.0;
  for (int i = 0; i < n_g; ++i) grid.theta[i] = interval.lo + i * grid.step;
  grid.theta.back() = n_g > 1 ? interval.hi : interval.lo;

  grid.b.assign(n_g, cplx(0.0, 0.0));
  for (int n = 0; n < dataset.size(); ++n) {
    const double t = dataset.t[n];
    cplx rot = std::polar(1.0, grid.theta[0] * t);
    const cplx stride = std::polar(1.0, grid.step * t);
    for (int i = 0; i < n_g; ++i) {
      grid.b[i] += dataset.z[n] * rot;
      rot *= stride;
    }
  }
  for (int i = 0; i < n_g; ++i) {
    grid.b[i] /= static_cast<double>(dataset.size());
    grid.bmax2 = std::max(grid.bmax2, std::norm(grid.b[i]));
  }
  return grid;
}

PairTable make_pair_table(const Dataset& dataset, const ModeGrid& a,
                          const ModeGrid& b) {
  PairTable tab;
  const int na = static_cast<int>(a.theta.size());
  const int nb = static_cast<int>(b.theta.size());
  tab.nb = nb;
  const double h = a.step;
  tab.lattice = na > 1 && nb > 1 &&
                std::abs(a.step - b.step) <= 1e-12 * std::max(a.step, b.step);
  if (tab.lattice) {
    tab.v.assign(na + nb - 1, cplx(0.0, 0.0));
    const double x0 = a.theta[0] - b.theta[0] - (nb - 1) * h;
    for (int n = 0; n < dataset.size(); ++n) {
      const double t = dataset.t[n];
      cplx rot = std::polar(1.0, x0 * t);
      const cplx stride = std::polar(1.0, h * t);
      for (std::size_t d = 0; d < tab.v.size(); ++d) {
        tab.v[d] += rot;
        rot *= stride;
      }
    }
  } else {
    tab.v.assign(static_cast<std::size_t>(na) * nb, cplx(0.0, 0.0));
    for (int n = 0; n < dataset.size(); ++n) {
      const double t = dataset.t[n];
      const cplx stride = std::polar(1.0, -b.step * t);
      for (int ia = 0; ia < na; ++ia) {
        cplx rot = std::polar(1.0, (a.theta[ia] - b.theta[0]) * t);
        for (int ib = 0; ib < nb; ++ib) {
          tab.v[static_cast<std::size_t>(ia) * nb + ib] += rot;
          rot *= stride;
        }
      }
    }
  }
  for (cplx& v : tab.v) {
    v /= static_cast<double>(dataset.size());
    tab.max_abs = std::max(tab.max_abs, std::abs(v));
  }
  return tab;
}

struct GridCandidate {
  double loss = kInf;
  std::array<int, kMaxModes> idx{};
};

struct GridScan {
  int k_modes = 0;
  double s2 = 0.0;
  bool l1 = false;
  std::vector<ModeGrid> grids;
  // pair(a, b) for a < b, addressed as pairs[b][a]
  std::vector<std::vector<PairTable>> pairs;
  bool prune = false;
  double rho = 0.0;
  std::array<double, kMaxModes + 1> rest_max{};  // sum of bmax2 over modes >= k

  int keep = 0;
  std::vector<GridCandidate> top;
  double worst = kInf;

  // DFS workspace: Cholesky factor of the tuple Gram matrix, row-major.
  std::array<cplx, kMaxModes * kMaxModes> lmat{};
  std::array<double, kMaxModes> ldiag{};
  std::array<cplx, kMaxModes> y{};
  std::array<int, kMaxModes> idx{};

  cplx gram(int k, int j, int ik, int ij) const {
    // G_{k,j} = g(theta_k - theta_j) = conj(pair(j, k) at (ij, ik)) for j < k.
    return std::conj(pairs[k][j].at(ij, ik));
  }

  void consider(double loss, const std::array<int, kMaxModes>& tuple) {
    if (static_cast<int>(top.size()) < keep) {
      top.push_back({loss, tuple});
    } else if (loss < worst) {
      auto it = std::max_element(
          top.begin(), top.end(),
          [](const GridCandidate& a, const GridCandidate& b) {
            return a.loss < b.loss;
          });
      *it = {loss, tuple};
    } else {
      return;
    }
    worst = static_cast<int>(top.size()) < keep
                ? kInf
                : std::max_element(top.begin(), top.end(),
                                   [](const GridCandidate& a,
                                      const GridCandidate& b) {
                                     return a.loss < b.loss;
                                   })
                      ->loss;
  }

  // Cholesky row for candidate i at depth k on top of the current prefix.
  // Returns false when the pivot collapses (phase collision).
  bool extend(int k, int i, double* d_out, cplx* y_out) {
    double row2 = 0.0;
    for (int j = 0; j < k; ++j) {
      cplx s = gram(k, j, i, idx[j]);
      for (int m = 0; m < j; ++m)
        s -= lmat[k * kMaxModes + m] * std::conj(lmat[j * kMaxModes + m]);
      s /= ldiag[j];
      lmat[k * kMaxModes + j] = s;
      row2 += std::norm(s);
    }
    const double d2 = 1.0 - row2;
    if (d2 < kDegeneratePivot2) return false;
    const double d = std::sqrt(d2);
    cplx yk = grids[k].b[i];
    for (int j = 0; j < k; ++j) yk -= lmat[k * kMaxModes + j] * y[j];
    yk /= d;
    *d_out = d;
    *y_out = yk;
    return true;
  }

  double leaf_loss(double sumy2) {
    if (!l1) return s2 - sumy2;
    // Rescale r = G^{-1} b onto the unit l1 ball; along that ray the loss is
    // s2 - (2c - c^2) * (b^H G^{-1} b).
    std::array<cplx, kMaxModes> r{};
    for (int i = k_modes - 1; i >= 0; --i) {
      cplx s = y[i];
      for (int j = i + 1; j < k_modes; ++j)
        s -= std::conj(lmat[j * kMaxModes + i]) * r[j];
      r[i] = s / ldiag[i];
    }
    double norm1 = 0.0;
    for (int i = 0; i < k_modes; ++i) norm1 += std::abs(r[i]);
    if (norm1 <= 1.0) return s2 - sumy2;
    const double c = 1.0 / norm1;
    return s2 - (2.0 * c - c * c) * sumy2;
  }

  void scan(int k, double sumy2, double sumb2, double prev_theta) {
    const ModeGrid& grid = grids[k];
    if (prune &&
        sumb2 + rest_max[k] <= (1.0 - rho) * (s2 - worst)) {
      return;
    }
    const int n_g = static_cast<int>(grid.theta.size());
    int first = 0;
    if (k > 0) {
      first = static_cast<int>(
          std::lower_bound(grid.theta.begin(), grid.theta.end(), prev_theta) -
          grid.theta.begin());
    }
    for (int i = first; i < n_g; ++i) {
      const double b2 = std::norm(grid.b[i]);
      if (prune &&
          sumb2 + b2 <= (1.0 - rho) * (s2 - worst) - rest_max[k + 1])
        continue;
      double d = 0.0;
      cplx yk(0.0, 0.0);
      if (!extend(k, i, &d, &yk)) continue;
      if (k + 1 == k_modes) {
        idx[k] = i;
        ldiag[k] = d;
        y[k] = yk;
        consider(leaf_loss(sumy2 + std::norm(yk)), idx);
      } else {
        idx[k] = i;
        ldiag[k] = d;
        y[k] = yk;
        scan(k + 1, sumy2 + std::norm(yk), sumb2 + b2, grid.theta[i]);
      }
    }
  }

  // Seeds the pruning threshold before the exhaustive pass: walk the modes in
  // order, greedily taking the strongest matched moment that keeps the phase
  // tuple ascending.  This lands on (or next to) the eventual minimizer, so
  // the scan starts with a near-final threshold.
  void seed_greedy() {
    double prev = -kInf;
    double sumy2 = 0.0;
    for (int k = 0; k < k_modes; ++k) {
      const ModeGrid& grid = grids[k];
      const int n_g = static_cast<int>(grid.theta.size());
      int first = static_cast<int>(
          std::lower_bound(grid.theta.begin(), grid.theta.end(), prev) -
          grid.theta.begin());
      if (first >= n_g) return;
      int pick = first;
      for (int i = first + 1; i < n_g; ++i)
        if (std::norm(grid.b[i]) > std::norm(grid.b[pick])) pick = i;
      idx[k] = pick;
      double d = 0.0;
      cplx yk(0.0, 0.0);
      if (!extend(k, pick, &d, &yk)) return;
      ldiag[k] = d;
      y[k] = yk;
      sumy2 += std::norm(yk);
      prev = grid.theta[pick];
    }
    consider(leaf_loss(sumy2), idx);
  }
};

// --- Nelder-Mead refinement over the box of intervals ---

struct EvalResult {
  double penalized = kInf;
  double loss = kInf;
  std::vector<double> theta;  // clipped, nudged
  std::vector<cplx> r;
};

EvalResult evaluate_theta(const Dataset& dataset,
                          const std::vector<Interval>& intervals,
                          const SearchConfig& config,
                          const std::vector<double>& theta_raw) {
  const int k = static_cast<int>(theta_raw.size());
  EvalResult out;
  out.theta.resize(k);
  double penalty = 0.0;
  for (int i = 0; i < k; ++i) {
    const Interval& box = intervals[i];
    double th = std::min(std::max(theta_raw[i], box.lo), box.hi);
    const double scale = std::max(box.width(), 1e-8);
    const double excess = std::abs(theta_raw[i] - th) / scale;
    penalty += excess * excess;
    out.theta[i] = th;
  }
  // Separate colliding phases by a fixed fraction of their interval width.
  for (int pass = 0; pass < 2; ++pass) {
    bool collided = false;
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        if (std::abs(out.theta[a] - out.theta[b]) >= config.collision_nudge)
          continue;
        collided = true;
        const Interval& box = intervals[b];
        const double nudge = std::max(box.width(), 1e-8) / 1000.0;
        double moved = out.theta[b] + nudge;
        if (moved > box.hi) moved = out.theta[b] - nudge;
        out.theta[b] = std::min(std::max(moved, box.lo), box.hi);
      }
    }
    if (!collided) break;
  }
  NormalSystem sys = build_normal(dataset, out.theta);
  Eigen::VectorXcd r;
  try {
    r = solve_normal(sys);
  } catch (const degenerate_modes_error&) {
    return out;  // infinite loss
  }
  if (config.l1_constraint) {
    double norm1 = 0.0;
    for (int i = 0; i < k; ++i) norm1 += std::abs(r(i));
    if (norm1 > 1.0) r /= norm1;
  }
  out.r.assign(r.data(), r.data() + k);
  // Direct residual sum rather than s2 - 2 Re(b^H r) + r^H G r: the algebraic
  // form bottoms out at the cancellation floor ~1e-16 * s2, which would cap
  // the refinable phase precision on clean data.
  out.loss = loss(dataset, out.r, out.theta);
  out.penalized = out.loss + penalty * (1.0 + sys.s2);
  return out;
}

bool theta_less(const std::vector<double>& a, const std::vector<double>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

EvalResult refine_simplex(const Dataset& dataset,
                          const std::vector<Interval>& intervals,
                          const SearchConfig& config,
                          const std::vector<double>& start,
                          const std::vector<double>& steps) {
  const int k = static_cast<int>(start.size());
  struct Vertex {
    std::vector<double> theta;
    EvalResult eval;
  };
  std::vector<Vertex> simplex;
  auto make_vertex = [&](const std::vector<double>& th) {
    Vertex v;
    v.theta = th;
    v.eval = evaluate_theta(dataset, intervals, config, th);
    return v;
  };
  simplex.push_back(make_vertex(start));
  for (int i = 0; i < k; ++i) {
    std::vector<double> th = start;
    double h = 0.5 * std::max(steps[i], 1e-9);
    if (th[i] + h > intervals[i].hi) h = -h;
    th[i] += h;
    simplex.push_back(make_vertex(th));
  }
  auto order = [&]() {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) {
                       if (a.eval.penalized != b.eval.penalized)
                         return a.eval.penalized < b.eval.penalized;
                       return theta_less(a.theta, b.theta);
                     });
  };
  order();
  for (int iter = 0; iter < config.refine_max_iter; ++iter) {
    double spread = 0.0;
    for (int i = 0; i < k; ++i) {
      for (const Vertex& v : simplex)
        spread = std::max(spread, std::abs(v.theta[i] - simplex[0].theta[i]));
    }
    const double fspread =
        simplex.back().eval.penalized - simplex[0].eval.penalized;
    if (spread < 1e-11 ||
        fspread < 1e-21 * (1.0 + std::abs(simplex[0].eval.penalized)))
      break;

    std::vector<double> centroid(k, 0.0);
    for (int v = 0; v < k; ++v)
      for (int i = 0; i < k; ++i) centroid[i] += simplex[v].theta[i] / k;
    const Vertex& worst = simplex.back();
    auto along = [&](double coef) {
      std::vector<double> th(k);
      for (int i = 0; i < k; ++i)
        th[i] = centroid[i] + coef * (centroid[i] - worst.theta[i]);
      return th;
    };
    Vertex reflected = make_vertex(along(1.0));
    if (reflected.eval.penalized < simplex[0].eval.penalized) {
      Vertex expanded = make_vertex(along(2.0));
      simplex.back() = expanded.eval.penalized < reflected.eval.penalized
                           ? std::move(expanded)
                           : std::move(reflected);
    } else if (reflected.eval.penalized <
               simplex[k - 1].eval.penalized) {
      simplex.back() = std::move(reflected);
    } else {
      const bool outside =
          reflected.eval.penalized < worst.eval.penalized;
      Vertex contracted = make_vertex(along(outside ? 0.5 : -0.5));
      if (contracted.eval.penalized <
          std::min(reflected.eval.penalized, worst.eval.penalized)) {
        simplex.back() = std::move(contracted);
      } else {
        for (int v = 1; v <= k; ++v) {
          std::vector<double> th(k);
          for (int i = 0; i < k; ++i)
            th[i] = 0.5 * (simplex[0].theta[i] + simplex[v].theta[i]);
          simplex[v] = make_vertex(th);
        }
      }
    }
    order();
  }
  return simplex[0].eval;
}

}  // namespace

double loss(const Dataset& dataset, const std::vector<std::complex<double>>& r,
            const std::vector<double>& theta) {
  if (r.size() != theta.size())
    throw std::invalid_argument("loss: r and theta size mismatch");
  if (dataset.size() == 0) throw std::invalid_argument("loss: empty dataset");
  double sum = 0.0;
  for (int n = 0; n < dataset.size(); ++n) {
    cplx fit(0.0, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k)
      fit += r[k] * std::polar(1.0, -theta[k] * dataset.t[n]);
    sum += std::norm(dataset.z[n] - fit);
  }
  return sum / static_cast<double>(dataset.size());
}

std::vector<std::complex<double>> solve_r_given_theta(
    const Dataset& dataset, const std::vector<double>& theta) {
  const int k = static_cast<int>(theta.size());
  if (k < 1) throw std::invalid_argument("solve_r: need at least one phase");
  if (k > dataset.size())
    throw std::invalid_argument("solve_r: more modes than samples");
  NormalSystem sys = build_normal(dataset, theta);
  Eigen::VectorXcd r = solve_normal(sys);
  return std::vector<cplx>(r.data(), r.data() + k);
}

LevelFit minimize_level(const Dataset& dataset,
                        const std::vector<Interval>& intervals,
                        const SearchConfig& config) {
  const int k_modes = static_cast<int>(intervals.size());
  if (k_modes < 1) throw std::invalid_argument("minimize_level: no intervals");
  if (k_modes > kMaxModes)
    throw std::invalid_argument("minimize_level: dense search supports at most 4 modes");
  if (k_modes > dataset.size())
    throw std::invalid_argument("minimize_level: more modes than samples");
  if (config.grid_points < 2 || config.refine_starts < 1)
    throw std::invalid_argument("minimize_level: bad search configuration");
  std::vector<Interval> boxes = intervals;
  for (const Interval& box : boxes) {
    if (!(box.lo <= box.hi) || !std::isfinite(box.lo) || !std::isfinite(box.hi))
      throw std::invalid_argument("minimize_level: malformed interval");
  }
  std::sort(boxes.begin(), boxes.end(), [](const Interval& a, const Interval& b) {
    return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
  });

  GridScan scan;
  scan.k_modes = k_modes;
  scan.s2 = mean_abs_square(dataset);
  scan.l1 = config.l1_constraint;
  scan.keep = config.refine_starts;
  for (const Interval& box : boxes)
    scan.grids.push_back(make_grid(dataset, box, config.grid_points));
  scan.pairs.resize(k_modes);
  for (int b = 0; b < k_modes; ++b) {
    scan.pairs[b].resize(b);
    for (int a = 0; a < b; ++a)
      scan.pairs[b][a] = make_pair_table(dataset, scan.grids[a], scan.grids[b]);
  }
  // Gershgorin floor on the tuple Gram eigenvalues: lambda_min >= 1 - rho.
  // The loss of a tuple is then at least s2 - (sum_k |b_k|^2) / (1 - rho),
  // which turns the kept-candidate threshold into an exact skip rule.  When
  // rho >= 1 (overlapping intervals) the floor is vacuous and the scan runs
  // the full enumeration.
  for (int a = 0; a < k_modes; ++a) {
    double row = 0.0;
    for (int b = 0; b < k_modes; ++b) {
      if (a == b) continue;
      row += scan.pairs[std::max(a, b)][std::min(a, b)].max_abs;
    }
    scan.rho = std::max(scan.rho, row);
  }
  scan.prune = scan.rho < 0.999;
  scan.rest_max[k_modes] = 0.0;
  for (int k = k_modes - 1; k >= 0; --k)
    scan.rest_max[k] = scan.rest_max[k + 1] + scan.grids[k].bmax2;

  scan.seed_greedy();
  scan.scan(0, 0.0, 0.0, -kInf);
  if (scan.top.empty())
    throw degenerate_modes_error(
        "minimize_level: every grid tuple is phase degenerate");

  std::sort(scan.top.begin(), scan.top.end(),
            [&](const GridCandidate& a, const GridCandidate& b) {
              if (a.loss != b.loss) return a.loss < b.loss;
              return a.idx < b.idx;
            });

  EvalResult best;
  std::vector<double> steps(k_modes);
  for (int k = 0; k < k_modes; ++k) steps[k] = scan.grids[k].step;
  for (const GridCandidate& cand : scan.top) {
    std::vector<double> start(k_modes);
    for (int k = 0; k < k_modes; ++k)
      start[k] = scan.grids[k].theta[cand.idx[k]];
    EvalResult at_grid = evaluate_theta(dataset, boxes, config, start);
    EvalResult refined = refine_simplex(dataset, boxes, config, start, steps);
    for (EvalResult* cur : {&at_grid, &refined}) {
      if (cur->loss < best.loss ||
          (cur->loss == best.loss && theta_less(cur->theta, best.theta)))
        best = std::move(*cur);
    }
  }
  if (!std::isfinite(best.loss))
    throw degenerate_modes_error("minimize_level: refinement found no valid fit");

  std::vector<int> order(k_modes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return best.theta[a] < best.theta[b];
  });
  LevelFit fit;
  fit.estimate.phases.resize(k_modes);
  fit.estimate.amplitudes.resize(k_modes);
  fit.estimate.intervals.resize(k_modes);
  for (int k = 0; k < k_modes; ++k) {
    fit.estimate.phases[k] = best.theta[order[k]];
    fit.estimate.amplitudes[k] = best.r[order[k]];
    fit.estimate.intervals[k] = boxes[order[k]];
  }
  fit.loss = loss(dataset, fit.estimate.amplitudes, fit.estimate.phases);
  return fit;
}

Schedule build_schedule(const SpectrumStats& stats, double epsilon, double eta,
                        double zeta, const ScheduleOverrides& overrides) {
  if (!(stats.p_min > 0.0) || stats.p_min > 1.0)
    throw std::invalid_argument("build_schedule: p_min outside (0, 1]");
  if (stats.residual < 0.0)
    throw std::invalid_argument("build_schedule: negative residual");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("build_schedule: epsilon must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("build_schedule: eta must be positive");
  if (zeta < 0.0) throw std::invalid_argument("build_schedule: negative zeta");

  const double p = stats.p_min;
  const double res = stats.residual;
  const bool dominant = p > 3.0 * res;
  const bool fully_overridden = overrides.has_gamma &&
                                (overrides.has_t0 || overrides.has_t0_gap) &&
                                overrides.has_n0 && overrides.has_n_level;
  if (!dominant && !fully_overridden) {
    throw std::invalid_argument(
        "build_schedule: dominance p_min > 3*residual fails, so the derived "
        "defaults are undefined; override gamma, t0, n0 and n_level");
  }

  Schedule sched;
  sched.epsilon = epsilon;
  sched.eta = eta;
  sched.zeta = zeta;
  sched.l1_constraint = overrides.l1_constraint;

  sched.q = overrides.has_q ? overrides.q
                            : std::min(0.9, 3.0 * res / p + 0.05);
  if (!(sched.q > 0.0) || sched.q >= 1.0)
    throw std::invalid_argument("build_schedule: q outside (0, 1)");

  const double margin = p * (p - 3.0 * res);
  sched.gamma = overrides.has_gamma
                    ? overrides.gamma
                    : std::max(1.0, std::log(1.0 / std::min(p * sched.q, margin)));
  if (!(sched.gamma > 0.0))
    throw std::invalid_argument("build_schedule: gamma must be positive");

  // A single dominant mode has no gap; the full phase range sets the scale.
  const double gap = std::isfinite(stats.min_gap) && stats.min_gap > 0.0
                         ? stats.min_gap
                         : kPi;
  if (overrides.has_t0) {
    sched.t0 = overrides.t0;
  } else if (overrides.has_t0_gap) {
    sched.t0 = overrides.t0_gap_multiple / gap;
  } else {
    sched.t0 = 2.0 * std::max(1.0, std::log(1.0 / sched.q)) / gap;
  }
  if (!(sched.t0 > 0.0) || !std::isfinite(sched.t0))
    throw std::invalid_argument("build_schedule: t0 must be positive");

  sched.levels = overrides.has_levels
                     ? overrides.levels
                     : std::max(static_cast<int>(std::ceil(
                                    std::log2(sched.q / (epsilon * sched.t0)))),
                                1);
  if (sched.levels < 1 || sched.levels > 40)
    throw std::invalid_argument("build_schedule: level count outside [1, 40]");

  const double log_eta = std::log(std::exp(1.0) + 1.0 / eta);
  double n0 = overrides.has_n0
                  ? overrides.n0
                  : std::max(2000.0, std::ceil(sched.t0 * sched.t0 * log_eta /
                                               (margin * margin)));
  double n_level = overrides.has_n_level
                       ? overrides.n_level
                       : std::max(2000.0, std::ceil(std::pow(p, -4.0) *
                                                    std::pow(sched.q, -(2.0 + zeta)) *
                                                    log_eta));
  if (!(n0 >= 1.0) || !(n_level >= 1.0) || n0 > 1e8 || n_level > 1e8)
    throw std::invalid_argument("build_schedule: sample count outside [1, 1e8]");
  sched.n0 = static_cast<int>(n0);

  sched.t_j.resize(sched.levels + 1);
  sched.n_j.resize(sched.levels + 1);
  for (int j = 0; j <= sched.levels; ++j) {
    sched.t_j[j] = std::ldexp(sched.t0, j);
    sched.n_j[j] = j == 0 ? sched.n0 : static_cast<int>(n_level);
  }
  return sched;
}

DiagnosticsReport expectation_error_diagnostics(const Dataset& dataset,
                                                const Spectrum& spectrum,
                                                const DominantSpec& truth,
                                                const ModeEstimate& estimate) {
  const int n = dataset.size();
  const int k = static_cast<int>(estimate.phases.size());
  if (n == 0) throw std::invalid_argument("diagnostics: empty dataset");
  if (estimate.amplitudes.size() != estimate.phases.size())
    throw std::invalid_argument("diagnostics: malformed estimate");
  for (int idx : truth.indices) {
    if (idx < 0 || idx >= spectrum.size())
      throw std::invalid_argument("diagnostics: truth index out of range");
  }

  DiagnosticsReport rep;

  std::vector<cplx> resid(n);
  cplx resid_sum(0.0, 0.0);
  for (int i = 0; i < n; ++i) {
    resid[i] = dataset.z[i] - signal_expectation(spectrum, dataset.t[i]);
    resid_sum += resid[i];
  }
  rep.residual_mean = std::abs(resid_sum / static_cast<double>(n));

  for (int a = 0; a < k; ++a) {
    cplx acc(0.0, 0.0);
    for (int i = 0; i < n; ++i)
      acc += resid[i] * std::polar(1.0, estimate.phases[a] * dataset.t[i]);
    acc /= static_cast<double>(n);
    rep.e_rz += -2.0 * (std::conj(estimate.amplitudes[a]) * acc).real();
  }

  auto empirical_minus_filter = [&](double x) {
    cplx g(0.0, 0.0);
    for (int i = 0; i < n; ++i) g += std::polar(1.0, x * dataset.t[i]);
    g /= static_cast<double>(n);
    return g - filter_value(dataset.density, x);
  };
  for (int m = 0; m < spectrum.size(); ++m) {
    if (spectrum.overlaps[m] == 0.0) continue;
    for (int a = 0; a < k; ++a) {
      const cplx w =
          empirical_minus_filter(estimate.phases[a] - spectrum.eigenvalues[m]);
      rep.e_pr +=
          2.0 * spectrum.overlaps[m] * (estimate.amplitudes[a] * w).real();
    }
  }
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (a == b) continue;
      const cplx w =
          empirical_minus_filter(estimate.phases[b] - estimate.phases[a]);
      rep.e_rr += 2.0 * (std::conj(estimate.amplitudes[a]) *
                         estimate.amplitudes[b] * w)
                            .real();
    }
  }

  rep.loss_at_optimum = loss(dataset, estimate.amplitudes, estimate.phases);
  std::vector<cplx> r_truth;
  std::vector<double> th_truth;
  for (int idx : truth.indices) {
    r_truth.emplace_back(spectrum.overlaps[idx], 0.0);
    th_truth.push_back(spectrum.eigenvalues[idx]);
  }
  rep.loss_at_truth =
      th_truth.empty() ? rep.loss_at_optimum : loss(dataset, r_truth, th_truth);
  return rep;
}

MmqcelsResult mm_qcels(const Spectrum& spectrum, int k_modes,
                       const Schedule& schedule, std::uint64_t seed,
                       MeasurementMode mode, const SearchConfig& search) {
  if (k_modes < 1 || k_modes > kMaxModes)
    throw std::invalid_argument("mm_qcels: k_modes outside [1, 4]");
  if (spectrum.size() < 1) throw std::invalid_argument("mm_qcels: empty spectrum");
  if (schedule.levels < 1 ||
      schedule.t_j.size() != static_cast<std::size_t>(schedule.levels + 1) ||
      schedule.n_j.size() != static_cast<std::size_t>(schedule.levels + 1))
    throw std::invalid_argument("mm_qcels: malformed schedule");
  for (int j = 0; j <= schedule.levels; ++j) {
    if (!(schedule.t_j[j] > 0.0) || schedule.n_j[j] < k_modes)
      throw std::invalid_argument("mm_qcels: malformed schedule");
  }

  SearchConfig level_search = search;
  level_search.l1_constraint = search.l1_constraint || schedule.l1_constraint;

  MmqcelsResult out;
  std::vector<Interval> intervals(k_modes, Interval{-kPi, kPi});
  RuntimeLedger cumulative;
  Dataset final_data;
  for (int j = 0; j <= schedule.levels; ++j) {
    const TimeDensity density =
        make_time_density(schedule.t_j[j], schedule.gamma);
    const std::uint64_t level_seed =
        RngStream::mix(seed, static_cast<std::uint64_t>(j));
    Dataset data =
        generate_dataset(spectrum, density, schedule.n_j[j], level_seed, mode);
    LevelFit fit = minimize_level(data, intervals, level_search);

    cumulative.t_total += data.ledger.t_total;
    cumulative.shots += data.ledger.shots;
    cumulative.t_max =
        std::max(cumulative.t_max, schedule.gamma * schedule.t_j[j]);

    LevelRecord rec;
    rec.level = j;
    rec.t_level = schedule.t_j[j];
    rec.t_bound = schedule.gamma * schedule.t_j[j];
    rec.cumulative = cumulative;
    rec.estimate = fit.estimate;
    rec.loss = fit.loss;
    out.levels.push_back(std::move(rec));

    const double half = kPi / schedule.t_j[j];
    for (int k = 0; k < k_modes; ++k) {
      intervals[k] = {std::max(fit.estimate.phases[k] - half, -kPi),
                      std::min(fit.estimate.phases[k] + half, kPi)};
    }
    if (j == schedule.levels) {
      out.estimate = std::move(fit.estimate);
      out.loss = fit.loss;
      final_data = std::move(data);
    }
  }
  out.ledger = cumulative;

  std::vector<int> by_overlap(spectrum.size());
  std::iota(by_overlap.begin(), by_overlap.end(), 0);
  std::stable_sort(by_overlap.begin(), by_overlap.end(), [&](int a, int b) {
    return spectrum.overlaps[a] > spectrum.overlaps[b];
  });
  DominantSpec truth;
  truth.indices.assign(
      by_overlap.begin(),
      by_overlap.begin() + std::min<std::size_t>(k_modes, by_overlap.size()));
  std::sort(truth.indices.begin(), truth.indices.end());
  out.diagnostics =
      expectation_error_diagnostics(final_data, spectrum, truth, out.estimate);
  return out;
}

std::string estimate_to_json(const MmqcelsResult& result) {
  nlohmann::json j;
  j["theta"] = result.estimate.phases;
  std::vector<double> re, im;
  for (const cplx& r : result.estimate.amplitudes) {
    re.push_back(r.real());
    im.push_back(r.imag());
  }
  j["r_re"] = re;
  j["r_im"] = im;
  j["intervals"] = nlohmann::json::array();
  for (const Interval& box : result.estimate.intervals)
    j["intervals"].push_back({box.lo, box.hi});
  j["t_max"] = result.ledger.t_max;
  j["t_total"] = result.ledger.t_total;
  j["loss"] = result.loss;
  return j.dump();
}

}  // namespace mmqcels
