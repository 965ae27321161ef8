#pragma once

// Shared helpers for the test suites: a deterministic RNG, random LP
// generators, and an exhaustive vertex-enumeration LP oracle that stays
// independent of the simplex implementation under test.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "idro/ambiguity.hpp"
#include "idro/model.hpp"
#include "idro/solver.hpp"
#include "idro/types.hpp"

namespace idro::testing {

inline std::mt19937_64 make_rng(unsigned long long seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  // Top-53-bit mantissa draw; identical across platforms.
  const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u01;
}

struct BruteForceResult {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  Vector point;
};

/// Enumerates all candidate vertices (intersections of n active constraints
/// drawn from inequality rows, equality rows, and finite bounds) and keeps
/// the best feasible one. Detects unboundedness with a large artificial box:
/// if the box-constrained optimum sits on the artificial box, the original
/// problem is reported unbounded. Intended for n <= 6.
inline BruteForceResult brute_force_lp(const StandardLp& lp, double box = 1e7) {
  const Index n = lp.num_vars();
  const Index k = lp.num_ineq();
  const Index q = lp.num_eq();

  // Collect every constraint as a row (a, b) meaning a'z <= b, plus a flag
  // for equalities which must always hold with equality.
  std::vector<Vector> rows;
  std::vector<double> rhs;
  std::vector<bool> is_eq;
  const Matrix gd = Matrix(lp.ineq_matrix);
  for (Index i = 0; i < k; ++i) {
    rows.push_back(gd.row(i).transpose());
    rhs.push_back(lp.ineq_rhs[i]);
    is_eq.push_back(false);
  }
  const Matrix ed = Matrix(lp.eq_matrix);
  for (Index i = 0; i < q; ++i) {
    rows.push_back(ed.row(i).transpose());
    rhs.push_back(lp.eq_rhs[i]);
    is_eq.push_back(true);
  }
  for (Index j = 0; j < n; ++j) {
    Vector e = Vector::Zero(n);
    e[j] = -1.0;
    rows.push_back(e);
    rhs.push_back(std::isfinite(lp.lower[j]) ? -lp.lower[j] : box);
    is_eq.push_back(false);
    e[j] = 1.0;
    rows.push_back(e);
    rhs.push_back(std::isfinite(lp.upper[j]) ? lp.upper[j] : box);
    is_eq.push_back(false);
  }
  const int total = static_cast<int>(rows.size());

  const auto feasible = [&](const Vector& z) {
    for (int i = 0; i < total; ++i) {
      const double act = rows[static_cast<size_t>(i)].dot(z);
      const double b = rhs[static_cast<size_t>(i)];
      if (is_eq[static_cast<size_t>(i)]) {
        if (std::abs(act - b) > 1e-7 * (1.0 + std::abs(b))) return false;
      } else if (act > b + 1e-7 * (1.0 + std::abs(b))) {
        return false;
      }
    }
    return true;
  };

  BruteForceResult best;
  bool found = false;
  bool on_artificial_box = false;

  std::vector<int> comb(static_cast<size_t>(n));
  const std::function<void(int, int)> visit = [&](int start, int depth) {
    if (depth == n) {
      Matrix a(n, n);
      Vector b(n);
      for (Index r = 0; r < n; ++r) {
        a.row(r) = rows[static_cast<size_t>(comb[static_cast<size_t>(r)])].transpose();
        b[r] = rhs[static_cast<size_t>(comb[static_cast<size_t>(r)])];
      }
      Eigen::FullPivLU<Matrix> lu(a);
      if (!lu.isInvertible()) return;
      const Vector z = lu.solve(b);
      if (!feasible(z)) return;
      const double obj = lp.objective.dot(z);
      if (!found || obj < best.objective - 1e-12) {
        found = true;
        best.objective = obj;
        best.point = z;
        on_artificial_box = false;
        for (Index j = 0; j < n; ++j) {
          if (std::abs(std::abs(z[j]) - box) < 1e-3) on_artificial_box = true;
        }
      }
      return;
    }
    for (int i = start; i < total; ++i) {
      comb[static_cast<size_t>(depth)] = i;
      visit(i + 1, depth + 1);
    }
  };
  visit(0, 0);

  if (!found) {
    best.status = LpStatus::Infeasible;
  } else if (on_artificial_box) {
    best.status = LpStatus::Unbounded;
  } else {
    best.status = LpStatus::Optimal;
  }
  return best;
}

/// Tiny chance-constrained program used across the suites:
/// max x subject to x <= 10 and the chance row x + xi <= 1, gamma = 0.1,
/// one sample at 0, support [-1, 1]. Closed forms: the forward optimum is
/// x = 1 - 10 eps for eps in [0, 0.1] and x = 0 beyond; epsilon_max = 1.
struct TinyProblem {
  CcLinearProgram model;
  SampleSet samples;
};

inline TinyProblem make_t1() {
  TinyProblem t;
  t.model.cost = Vector::Constant(1, -1.0);
  t.model.a = Matrix::Constant(1, 1, 1.0);
  t.model.h = Vector::Constant(1, 10.0);
  t.model.b = Matrix::Constant(1, 1, 1.0);
  t.model.d_mat = Matrix::Constant(1, 1, 1.0);
  t.model.d = Vector::Constant(1, 1.0);
  t.model.gamma = 0.1;
  t.samples.samples = Matrix::Zero(1, 1);
  t.samples.lower_bound = Vector::Constant(1, -1.0);
  t.samples.upper_bound = Vector::Constant(1, 1.0);
  return t;
}

/// Random small chance-constrained model paired with samples. The chance
/// right-hand side is padded so that x = 0 admits (tau, lambda, s) =
/// (0, 0, 0) at every radius, which keeps the forward program feasible on
/// the whole grid; box rows keep it bounded.
inline TinyProblem random_cc_problem(std::mt19937_64& rng, Index n, Index m,
                                     Index n_cc, Index n_samples) {
  TinyProblem t;
  t.model.cost.resize(n);
  for (Index j = 0; j < n; ++j) t.model.cost[j] = uniform(rng, -1.0, 1.0);

  // Box rows +-x_j <= u keep every direction bounded.
  t.model.a = Matrix::Zero(2 * n, n);
  t.model.h.resize(2 * n);
  for (Index j = 0; j < n; ++j) {
    t.model.a(2 * j, j) = 1.0;
    t.model.h[2 * j] = uniform(rng, 0.5, 2.5);
    t.model.a(2 * j + 1, j) = -1.0;
    t.model.h[2 * j + 1] = uniform(rng, 0.5, 2.5);
  }

  t.model.b.resize(n_cc, n);
  t.model.d_mat.resize(n_cc, m);
  for (Index k = 0; k < n_cc; ++k) {
    for (Index j = 0; j < n; ++j) t.model.b(k, j) = uniform(rng, -1.0, 1.0);
    for (Index j = 0; j < m; ++j) t.model.d_mat(k, j) = uniform(rng, -1.0, 1.0);
  }
  t.model.gamma = 0.1;

  t.samples.lower_bound.resize(m);
  t.samples.upper_bound.resize(m);
  for (Index j = 0; j < m; ++j) {
    t.samples.lower_bound[j] = -uniform(rng, 0.3, 1.0);
    t.samples.upper_bound[j] = uniform(rng, 0.3, 1.0);
  }
  t.samples.samples.resize(n_samples, m);
  for (Index i = 0; i < n_samples; ++i) {
    for (Index j = 0; j < m; ++j) {
      t.samples.samples(i, j) =
          uniform(rng, t.samples.lower_bound[j], t.samples.upper_bound[j]);
    }
  }

  // d_k >= m * max_j max-corner |D_kj * corner| guarantees the padded slack.
  t.model.d.resize(n_cc);
  for (Index k = 0; k < n_cc; ++k) {
    double worst = 0.0;
    for (Index j = 0; j < m; ++j) {
      worst = std::max({worst, t.model.d_mat(k, j) * t.samples.lower_bound[j],
                        t.model.d_mat(k, j) * t.samples.upper_bound[j]});
    }
    t.model.d[k] = static_cast<double>(m) * worst + uniform(rng, 0.05, 0.5);
  }
  return t;
}

/// Random bounded-feasible LP: box bounds keep it bounded, and the rows are
/// shifted so that an interior point stays feasible.
inline StandardLp random_lp(std::mt19937_64& rng, Index n, Index k, Index q) {
  Matrix g(k, n), e(q, n);
  Vector gb(k), eb(q);
  Vector center(n);
  for (Index j = 0; j < n; ++j) center[j] = uniform(rng, -1.0, 1.0);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < n; ++j) g(i, j) = uniform(rng, -2.0, 2.0);
    gb[i] = g.row(i).dot(center) + uniform(rng, 0.05, 2.0);
  }
  for (Index i = 0; i < q; ++i) {
    for (Index j = 0; j < n; ++j) e(i, j) = uniform(rng, -2.0, 2.0);
    eb[i] = e.row(i).dot(center);
  }
  Vector c(n);
  for (Index j = 0; j < n; ++j) c[j] = uniform(rng, -1.0, 1.0);
  StandardLp lp = StandardLp::from_dense(c, g, gb, e, eb);
  lp.lower = Vector::Constant(n, -4.0);
  lp.upper = Vector::Constant(n, 4.0);
  return lp;
}

}  // namespace idro::testing
