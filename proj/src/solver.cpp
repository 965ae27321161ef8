#include "idro/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>

namespace idro {
namespace {

bool is_finite(double v) { return std::isfinite(v); }

void check_no_nan(const Vector& v, const char* name) {
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) {
      throw std::invalid_argument(std::string("StandardLp: NaN entry in ") + name);
    }
  }
}

void check_no_nan(const SparseMatrix& m, const char* name) {
  for (Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (std::isnan(it.value())) {
        throw std::invalid_argument(std::string("StandardLp: NaN entry in ") + name);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Equality-form bounded-variable revised simplex:
//   min f'v   s.t.  M v = r,  lo <= v <= hi.
//
// The basis inverse is kept as an explicit dense matrix updated by
// Gauss-Jordan rank-1 pivots with periodic refactorization. Phase 1 uses one
// artificial per row. Dantzig pricing, switching to Bland's rule after a
// streak of degenerate pivots (anti-cycling).
// ---------------------------------------------------------------------------
class CanonicalSimplex {
 public:
  enum class Result { Optimal, Infeasible, Unbounded };

  CanonicalSimplex(const SparseMatrix& m, Vector r, Vector f, Vector lo, Vector hi,
                   const SolverConfig& cfg)
      : m_(m),
        rhs_(std::move(r)),
        cost_(std::move(f)),
        lo_(std::move(lo)),
        hi_(std::move(hi)),
        cfg_(cfg),
        n_rows_(m.rows()),
        n_struct_(m.cols()) {
    n_total_ = n_struct_ + n_rows_;
  }

  Result solve() {
    initialize();
    if (phase1_needed_) {
      phase_ = 1;
      const Result r1 = iterate();
      if (r1 != Result::Optimal) {
        throw NumericalFailure("phase 1 terminated abnormally");
      }
      if (phase1_objective() > feas_threshold()) return Result::Infeasible;
    }
    fix_artificials();
    phase_ = 2;
    const Result r2 = iterate();
    if (r2 == Result::Optimal) cleanup();
    return r2;
  }

  Vector structural_values() const { return values_.head(n_struct_); }

  // Multipliers y = B^-T f_B of the equality rows under the true cost.
  Vector row_multipliers() const {
    Vector cb(n_rows_);
    for (Index p = 0; p < n_rows_; ++p) cb[p] = cost_of(basic_[p], 2);
    return binv_.transpose() * cb;
  }

  double objective() const {
    double v = 0.0;
    for (Index j = 0; j < n_struct_; ++j) v += cost_[j] * values_[j];
    return v;
  }

  long iterations() const { return total_iterations_; }

 private:
  enum class VarState : unsigned char { Basic, AtLower, AtUpper, FreeZero };

  double cost_of(Index j, int phase) const {
    if (phase == 1) return j >= n_struct_ ? 1.0 : 0.0;
    return j >= n_struct_ ? 0.0 : cost_[j];
  }

  double lower_of(Index j) const { return j >= n_struct_ ? 0.0 : lo_[j]; }
  double upper_of(Index j) const {
    if (j >= n_struct_) return art_fixed_ ? 0.0 : kInfinity;
    return hi_[j];
  }

  // Accumulates column j of the extended matrix [M | sigma e_i] into w.
  void column_into(Index j, Vector& w) const {
    w.setZero();
    if (j < n_struct_) {
      for (SparseMatrix::InnerIterator it(m_, j); it; ++it) w[it.row()] = it.value();
    } else {
      w[j - n_struct_] = art_sign_[j - n_struct_];
    }
  }

  // w_out = B^-1 * column(j) using the sparse structure of the column.
  void ftran(Index j, Vector& w_out) const {
    w_out.setZero();
    if (j < n_struct_) {
      for (SparseMatrix::InnerIterator it(m_, j); it; ++it) {
        w_out.noalias() += it.value() * binv_.col(it.row());
      }
    } else {
      w_out = art_sign_[j - n_struct_] * binv_.col(j - n_struct_);
    }
  }

  // B * w through the sparse basic columns; cheap residual check for the
  // accumulated inverse.
  Vector multiply_basis(const Vector& w) const {
    Vector out = Vector::Zero(n_rows_);
    for (Index p = 0; p < n_rows_; ++p) {
      if (w[p] == 0.0) continue;
      const Index j = basic_[p];
      if (j < n_struct_) {
        for (SparseMatrix::InnerIterator it(m_, j); it; ++it) {
          out[it.row()] += w[p] * it.value();
        }
      } else {
        out[j - n_struct_] += w[p] * art_sign_[j - n_struct_];
      }
    }
    return out;
  }

  // FTRAN with a drift guard: if the explicit inverse has degraded, rebuild
  // it once and recompute.
  void checked_ftran(Index j, Vector& w_out, Vector& scratch) {
    ftran(j, w_out);
    if (n_rows_ == 0) return;
    scratch = multiply_basis(w_out);
    column_into(j, scratch_col_);
    const double err = (scratch - scratch_col_).cwiseAbs().maxCoeff();
    const double scale = 1.0 + scratch_col_.cwiseAbs().maxCoeff();
    if (err > 1e-7 * scale || !w_out.allFinite()) {
      refactor();
      ftran(j, w_out);
      scratch = multiply_basis(w_out);
      if ((scratch - scratch_col_).cwiseAbs().maxCoeff() > 1e-5 * scale ||
          !w_out.allFinite()) {
        throw NumericalFailure("basis too ill-conditioned for a reliable pivot column");
      }
    }
  }

  double reduced_cost(Index j, const Vector& y, int phase) const {
    double d = cost_of(j, phase);
    if (j < n_struct_) {
      for (SparseMatrix::InnerIterator it(m_, j); it; ++it) d -= y[it.row()] * it.value();
    } else {
      d -= y[j - n_struct_] * art_sign_[j - n_struct_];
    }
    return d;
  }

  double phase1_objective() const {
    double v = 0.0;
    for (Index i = 0; i < n_rows_; ++i) v += values_[n_struct_ + i];
    return v;
  }

  double feas_threshold() const {
    return cfg_.feasibility_tol * (1.0 + rhs_.cwiseAbs().sum());
  }

  void initialize() {
    values_.setZero(n_total_);
    state_.assign(static_cast<size_t>(n_total_), VarState::AtLower);
    for (Index j = 0; j < n_struct_; ++j) {
      if (is_finite(lo_[j])) {
        values_[j] = lo_[j];
        state_[j] = VarState::AtLower;
      } else if (is_finite(hi_[j])) {
        values_[j] = hi_[j];
        state_[j] = VarState::AtUpper;
      } else {
        values_[j] = 0.0;
        state_[j] = VarState::FreeZero;
      }
    }
    Vector residual = rhs_;
    for (Index j = 0; j < n_struct_; ++j) {
      if (values_[j] == 0.0) continue;
      for (SparseMatrix::InnerIterator it(m_, j); it; ++it) {
        residual[it.row()] -= it.value() * values_[j];
      }
    }
    art_sign_.resize(n_rows_);
    basic_.resize(n_rows_);
    binv_.setZero(n_rows_, n_rows_);
    phase1_needed_ = false;
    for (Index i = 0; i < n_rows_; ++i) {
      art_sign_[i] = residual[i] >= 0.0 ? 1.0 : -1.0;
      const Index aj = n_struct_ + i;
      basic_[i] = aj;
      state_[static_cast<size_t>(aj)] = VarState::Basic;
      values_[aj] = std::abs(residual[i]);
      binv_(i, i) = art_sign_[i];
      if (values_[aj] > cfg_.feasibility_tol) phase1_needed_ = true;
    }
    art_fixed_ = false;
    total_iterations_ = 0;
    pivots_since_refactor_ = 0;
    degenerate_streak_ = 0;
  }

  void fix_artificials() {
    art_fixed_ = true;
    for (Index i = 0; i < n_rows_; ++i) {
      const size_t aj = static_cast<size_t>(n_struct_ + i);
      if (state_[aj] != VarState::Basic) {
        state_[aj] = VarState::AtLower;
        values_[n_struct_ + i] = 0.0;
      }
    }
  }

  long iteration_budget() const {
    if (cfg_.max_iterations > 0) return cfg_.max_iterations;
    return 200 * static_cast<long>(n_rows_) + 4 * static_cast<long>(n_struct_) + 20000;
  }

  struct Entering {
    Index j = -1;
    double direction = 0.0;
    double violation = 0.0;
  };

  Entering price(const Vector& y, bool bland) const {
    Entering best;
    const Index scan_end = art_fixed_ ? n_struct_ : n_total_;
    for (Index j = 0; j < scan_end; ++j) {
      const auto st = state_[static_cast<size_t>(j)];
      if (st == VarState::Basic) continue;
      if (upper_of(j) - lower_of(j) <= 0.0) continue;  // fixed variable
      const double d = reduced_cost(j, y, phase_);
      double dir = 0.0;
      double viol = 0.0;
      if (st == VarState::AtLower && d < -cfg_.optimality_tol) {
        dir = 1.0;
        viol = -d;
      } else if (st == VarState::AtUpper && d > cfg_.optimality_tol) {
        dir = -1.0;
        viol = d;
      } else if (st == VarState::FreeZero && std::abs(d) > cfg_.optimality_tol) {
        dir = d > 0.0 ? -1.0 : 1.0;
        viol = std::abs(d);
      } else {
        continue;
      }
      if (bland) return {j, dir, viol};
      if (viol > best.violation) best = {j, dir, viol};
    }
    return best;
  }

  void refactor() {
    Matrix b(n_rows_, n_rows_);
    b.setZero();
    Vector col(n_rows_);
    for (Index p = 0; p < n_rows_; ++p) {
      column_into(basic_[p], col);
      b.col(p) = col;
    }
    Eigen::PartialPivLU<Matrix> lu(b);
    binv_ = lu.inverse();
    pivots_since_refactor_ = 0;
    recompute_basic_values();
    if (!binv_.allFinite() || !values_.allFinite()) {
      throw NumericalFailure("singular basis after refactorization");
    }
  }

  void recompute_basic_values() {
    Vector residual = rhs_;
    for (Index j = 0; j < n_total_; ++j) {
      if (state_[static_cast<size_t>(j)] == VarState::Basic) continue;
      const double v = values_[j];
      if (v == 0.0) continue;
      if (j < n_struct_) {
        for (SparseMatrix::InnerIterator it(m_, j); it; ++it) {
          residual[it.row()] -= it.value() * v;
        }
      } else {
        residual[j - n_struct_] -= art_sign_[j - n_struct_] * v;
      }
    }
    const Vector xb = binv_ * residual;
    for (Index p = 0; p < n_rows_; ++p) values_[basic_[p]] = xb[p];
  }

  Result iterate() {
    const long budget = iteration_budget();
    Vector y(n_rows_), cb(n_rows_), w(n_rows_);
    while (true) {
      if (++total_iterations_ > budget) {
        throw NumericalFailure("simplex iteration budget exhausted");
      }
      for (Index p = 0; p < n_rows_; ++p) cb[p] = cost_of(basic_[p], phase_);
      y.noalias() = binv_.transpose() * cb;

      const bool bland = degenerate_streak_ > 3 * n_rows_;
      Entering ent = price(y, bland);
#ifdef IDRO_SIMPLEX_DEBUG
      if (total_iterations_ % 50 == 0 || ent.j < 0) {
        double obj = 0.0;
        for (Index p = 0; p < n_rows_; ++p) obj += cost_of(basic_[p], phase_) * values_[basic_[p]];
        fprintf(stderr, "[simplex] it=%ld ph=%d obj=%.6e viol=%.3e j=%ld bland=%d ymax=%.2e streak=%ld\n",
                total_iterations_, phase_, obj, ent.violation, static_cast<long>(ent.j),
                int(bland), y.cwiseAbs().maxCoeff(), degenerate_streak_);
      }
#endif
      if (ent.j < 0) return Result::Optimal;

      scratch_col_.resize(n_rows_);
      scratch_res_.resize(n_rows_);
      checked_ftran(ent.j, w, scratch_res_);

      // Harris two-pass ratio test. The entering variable moves by
      // t*direction >= 0; basic variable at position p changes at rate
      // -direction*w[p]. Pass one computes the blocking step with each
      // bound relaxed by a small feasibility tolerance, pass two picks the
      // largest pivot among rows whose strict ratio fits under that relaxed
      // step. The relaxation window scales with 1/|rate|, which steers the
      // pivot away from the tiny entries that degenerate bases otherwise
      // accumulate into near-singularity.
      double t_flip = upper_of(ent.j) - lower_of(ent.j);  // bound-to-bound move
      if (state_[static_cast<size_t>(ent.j)] == VarState::FreeZero) t_flip = kInfinity;
      const double bound_slack = 0.1 * cfg_.feasibility_tol;
      const auto ratio_of = [&](Index p, double relax, double& ratio, bool& to_upper) {
        const double rate = -ent.direction * w[p];
        if (std::abs(rate) <= cfg_.pivot_tol) return false;
        const Index bj = basic_[p];
        if (rate < 0.0) {
          const double lb = lower_of(bj);
          if (!is_finite(lb)) return false;
          ratio = std::max(0.0, (values_[bj] - lb + relax) / (-rate));
          to_upper = false;
        } else {
          const double ub = upper_of(bj);
          if (!is_finite(ub)) return false;
          ratio = std::max(0.0, (ub - values_[bj] + relax) / rate);
          to_upper = true;
        }
        return true;
      };

      double t_relaxed = t_flip;
      for (Index p = 0; p < n_rows_; ++p) {
        double ratio;
        bool to_upper;
        if (ratio_of(p, bound_slack, ratio, to_upper)) {
          t_relaxed = std::min(t_relaxed, ratio);
        }
      }

      Index leave_pos = -1;
      double leave_pivot = 0.0;
      double t_limit = t_flip;
      bool leave_to_upper = false;
      if (is_finite(t_relaxed)) {
        for (Index p = 0; p < n_rows_; ++p) {
          double ratio;
          bool to_upper;
          if (!ratio_of(p, 0.0, ratio, to_upper)) continue;
          if (ratio > t_relaxed) continue;
          if (leave_pos >= 0 && std::abs(w[p]) <= std::abs(leave_pivot)) continue;
          leave_pos = p;
          leave_pivot = w[p];
          leave_to_upper = to_upper;
          t_limit = ratio;
        }
        if (leave_pos < 0 || t_flip <= t_limit) {
          // Flipping the entering bound is the cheapest blocking move.
          leave_pos = -1;
          t_limit = t_flip;
        }
      }

      if (!is_finite(t_limit)) {
#ifdef IDRO_SIMPLEX_DEBUG
        {
          double max_rate = -kInfinity, min_rate = kInfinity;
          int blocked_tiny = 0;
          for (Index p = 0; p < n_rows_; ++p) {
            const double rate = -ent.direction * w[p];
            max_rate = std::max(max_rate, rate);
            min_rate = std::min(min_rate, rate);
            if (std::abs(rate) > 0 && std::abs(rate) <= cfg_.pivot_tol) ++blocked_tiny;
          }
          fprintf(stderr,
                  "[simplex] UNBOUNDED it=%ld ph=%d j=%ld dir=%.0f d=%.3e state=%d "
                  "rate[min=%.3e max=%.3e] tiny=%d wmax=%.3e\n",
                  total_iterations_, phase_, static_cast<long>(ent.j), ent.direction,
                  ent.violation, static_cast<int>(state_[static_cast<size_t>(ent.j)]),
                  min_rate, max_rate, blocked_tiny, w.cwiseAbs().maxCoeff());
        }
#endif
        if (phase_ == 1) throw NumericalFailure("phase 1 reported an unbounded ray");
        return Result::Unbounded;
      }

      const double step = std::max(t_limit, 0.0);
      degenerate_streak_ = step <= 1e-11 ? degenerate_streak_ + 1 : 0;

      // Apply the move.
      if (step > 0.0) {
        for (Index p = 0; p < n_rows_; ++p) {
          values_[basic_[p]] -= ent.direction * step * w[p];
        }
        values_[ent.j] += ent.direction * step;
      }

      if (leave_pos < 0) {
        // Pure bound flip of the entering variable.
        auto& st = state_[static_cast<size_t>(ent.j)];
        st = (st == VarState::AtLower) ? VarState::AtUpper : VarState::AtLower;
        continue;
      }

      if (std::abs(leave_pivot) < cfg_.pivot_tol) {
        refactor();
        ftran(ent.j, w);
        if (std::abs(w[leave_pos]) < cfg_.pivot_tol) {
          throw NumericalFailure("pivot below tolerance after refactorization");
        }
        leave_pivot = w[leave_pos];
      }

      const Index leaving = basic_[leave_pos];
      values_[leaving] = leave_to_upper ? upper_of(leaving) : lower_of(leaving);
      state_[static_cast<size_t>(leaving)] =
          leave_to_upper ? VarState::AtUpper : VarState::AtLower;
      state_[static_cast<size_t>(ent.j)] = VarState::Basic;
      basic_[leave_pos] = ent.j;

      // Rank-1 Gauss-Jordan update of the explicit inverse.
      const double inv_pivot = 1.0 / leave_pivot;
      binv_.row(leave_pos) *= inv_pivot;
      for (Index i = 0; i < n_rows_; ++i) {
        if (i == leave_pos) continue;
        const double factor = w[i];
        if (factor != 0.0) binv_.row(i) -= factor * binv_.row(leave_pos);
      }

      if (++pivots_since_refactor_ >= cfg_.refactor_interval) refactor();
    }
  }

  // One clean factorization at the optimum so the reported point satisfies
  // the feasibility contract rather than accumulated-update drift.
  void cleanup() { refactor(); }

  const SparseMatrix& m_;
  Vector rhs_, cost_, lo_, hi_;
  SolverConfig cfg_;
  Index n_rows_, n_struct_, n_total_ = 0;

  Vector values_;
  std::vector<VarState> state_;
  std::vector<Index> basic_;
  Vector art_sign_;
  Vector scratch_col_;
  Vector scratch_res_;
  Matrix binv_;
  bool phase1_needed_ = false;
  bool art_fixed_ = false;
  int phase_ = 1;
  long total_iterations_ = 0;
  int pivots_since_refactor_ = 0;
  long degenerate_streak_ = 0;
};

struct ScaledLp {
  SparseMatrix ineq;
  Vector ineq_rhs;
  SparseMatrix eq;
  Vector eq_rhs;
  Vector ineq_scale;  // original dual = scale * scaled dual
  Vector eq_scale;
};

ScaledLp equilibrate(const StandardLp& lp, bool enabled) {
  ScaledLp out;
  out.ineq = lp.ineq_matrix;
  out.ineq_rhs = lp.ineq_rhs;
  out.eq = lp.eq_matrix;
  out.eq_rhs = lp.eq_rhs;
  out.ineq_scale = Vector::Ones(lp.num_ineq());
  out.eq_scale = Vector::Ones(lp.num_eq());
  if (!enabled) return out;

  const auto scale_rows = [](SparseMatrix& m, Vector& rhs, Vector& scale) {
    Vector maxabs = Vector::Zero(m.rows());
    for (Index k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        maxabs[it.row()] = std::max(maxabs[it.row()], std::abs(it.value()));
      }
    }
    for (Index i = 0; i < m.rows(); ++i) {
      scale[i] = maxabs[i] > 0.0 ? 1.0 / maxabs[i] : 1.0;
    }
    for (Index k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        it.valueRef() *= scale[it.row()];
      }
    }
    rhs.array() *= scale.array();
  };
  scale_rows(out.ineq, out.ineq_rhs, out.ineq_scale);
  scale_rows(out.eq, out.eq_rhs, out.eq_scale);
  return out;
}

// Primal route: canonical variables (z, slack). Basis size = #rows.
LpSolution solve_primal_route(const StandardLp& lp, const ScaledLp& sc,
                              const SolverConfig& cfg) {
  const Index n = lp.num_vars();
  const Index k = lp.num_ineq();
  const Index q = lp.num_eq();
  const Index rows = k + q;

  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(sc.ineq.nonZeros() + sc.eq.nonZeros() + k));
  for (Index c = 0; c < sc.ineq.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(sc.ineq, c); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Index c = 0; c < sc.eq.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(sc.eq, c); it; ++it) {
      trips.emplace_back(k + it.row(), it.col(), it.value());
    }
  }
  for (Index i = 0; i < k; ++i) trips.emplace_back(i, n + i, 1.0);
  SparseMatrix m(rows, n + k);
  m.setFromTriplets(trips.begin(), trips.end());

  Vector r(rows);
  r.head(k) = sc.ineq_rhs;
  r.tail(q) = sc.eq_rhs;
  Vector f = Vector::Zero(n + k);
  f.head(n) = lp.objective;
  Vector lo(n + k), hi(n + k);
  lo.head(n) = lp.lower;
  hi.head(n) = lp.upper;
  lo.tail(k).setZero();
  hi.tail(k).setConstant(kInfinity);

  CanonicalSimplex simplex(m, std::move(r), std::move(f), std::move(lo), std::move(hi),
                           cfg);
  const auto result = simplex.solve();

  LpSolution sol;
  sol.iterations = simplex.iterations();
  if (result == CanonicalSimplex::Result::Infeasible) {
    sol.status = LpStatus::Infeasible;
    return sol;
  }
  if (result == CanonicalSimplex::Result::Unbounded) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }

  sol.status = LpStatus::Optimal;
  const Vector v = simplex.structural_values();
  sol.primal = v.head(n);
  const Vector pi = simplex.row_multipliers();
  sol.dual_ineq = (-pi.head(k).array() * sc.ineq_scale.array()).cwiseMax(0.0);
  sol.dual_eq = -pi.tail(q).array() * sc.eq_scale.array();
  // Bound multipliers from reduced costs: c + G'a + E'b - dl + du = 0.
  Vector grad = lp.objective;
  if (k > 0) grad += lp.ineq_matrix.transpose() * sol.dual_ineq;
  if (q > 0) grad += lp.eq_matrix.transpose() * sol.dual_eq;
  sol.dual_lower = grad.cwiseMax(0.0);
  sol.dual_upper = (-grad).cwiseMax(0.0);
  sol.objective_value = lp.objective.dot(sol.primal);
  return sol;
}

// Dual route: solve  min h'y + b'w  s.t. G'y + E'w = -c, y >= 0, w free,
// where G includes folded variable-bound rows. Basis size = #variables of
// the original problem, which is the small dimension for the assembled DRO
// programs. The original primal point is read off the row multipliers.
LpSolution solve_dual_route(const StandardLp& lp, const ScaledLp& sc,
                            const SolverConfig& cfg) {
  const Index n = lp.num_vars();
  const Index k = lp.num_ineq();
  const Index q = lp.num_eq();

  std::vector<Index> lower_rows, upper_rows;
  for (Index j = 0; j < n; ++j) {
    if (is_finite(lp.lower[j])) lower_rows.push_back(j);
    if (is_finite(lp.upper[j])) upper_rows.push_back(j);
  }
  const Index kl = static_cast<Index>(lower_rows.size());
  const Index ku = static_cast<Index>(upper_rows.size());
  const Index n_cols = k + kl + ku + q;

  // Columns of the canonical matrix are rows of [G; -I_l; +I_u; E].
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(sc.ineq.nonZeros() + sc.eq.nonZeros() + kl + ku));
  for (Index c = 0; c < sc.ineq.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(sc.ineq, c); it; ++it) {
      trips.emplace_back(it.col(), it.row(), it.value());
    }
  }
  for (Index i = 0; i < kl; ++i) trips.emplace_back(lower_rows[i], k + i, -1.0);
  for (Index i = 0; i < ku; ++i) trips.emplace_back(upper_rows[i], k + kl + i, 1.0);
  for (Index c = 0; c < sc.eq.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(sc.eq, c); it; ++it) {
      trips.emplace_back(it.col(), k + kl + ku + it.row(), it.value());
    }
  }
  SparseMatrix m(n, n_cols);
  m.setFromTriplets(trips.begin(), trips.end());

  Vector f(n_cols);
  f.head(k) = sc.ineq_rhs;
  for (Index i = 0; i < kl; ++i) f[k + i] = -lp.lower[lower_rows[i]];
  for (Index i = 0; i < ku; ++i) f[k + kl + i] = lp.upper[upper_rows[i]];
  f.tail(q) = sc.eq_rhs;

  Vector lo = Vector::Zero(n_cols);
  Vector hi = Vector::Constant(n_cols, kInfinity);
  for (Index i = 0; i < q; ++i) {
    lo[k + kl + ku + i] = -kInfinity;  // equality multipliers are free
  }

  const Vector r = -lp.objective;

  LpSolution sol;
  CanonicalSimplex simplex(m, r, f, lo, hi, cfg);
  const auto result = simplex.solve();
  sol.iterations = simplex.iterations();

  if (result == CanonicalSimplex::Result::Unbounded) {
    sol.status = LpStatus::Infeasible;
    return sol;
  }
  if (result == CanonicalSimplex::Result::Infeasible) {
    // Dual infeasible: the primal is unbounded or infeasible. Farkas check
    // through the homogeneous dual, always feasible at y = 0.
    CanonicalSimplex farkas(m, Vector::Zero(n), f, lo, hi, cfg);
    const auto fr = farkas.solve();
    sol.iterations += farkas.iterations();
    sol.status = fr == CanonicalSimplex::Result::Unbounded ? LpStatus::Infeasible
                                                           : LpStatus::Unbounded;
    return sol;
  }

  sol.status = LpStatus::Optimal;
  const Vector v = simplex.structural_values();
  const Vector pi = simplex.row_multipliers();
  sol.primal = pi;
  sol.dual_ineq = v.head(k).array() * sc.ineq_scale.array();
  sol.dual_lower = Vector::Zero(n);
  sol.dual_upper = Vector::Zero(n);
  for (Index i = 0; i < kl; ++i) sol.dual_lower[lower_rows[i]] = v[k + i];
  for (Index i = 0; i < ku; ++i) sol.dual_upper[upper_rows[i]] = v[k + kl + i];
  sol.dual_eq = v.tail(q).array() * sc.eq_scale.array();
  sol.objective_value = lp.objective.dot(sol.primal);
  return sol;
}

}  // namespace

StandardLp StandardLp::from_dense(const Vector& objective, const Matrix& ineq,
                                  const Vector& ineq_rhs, const Matrix& eq,
                                  const Vector& eq_rhs) {
  StandardLp lp;
  lp.objective = objective;
  lp.ineq_matrix = ineq.size() > 0 ? SparseMatrix(ineq.sparseView())
                                   : SparseMatrix(ineq.rows(), objective.size());
  lp.ineq_rhs = ineq_rhs;
  lp.eq_matrix = eq.size() > 0 ? SparseMatrix(eq.sparseView())
                               : SparseMatrix(eq.rows(), objective.size());
  lp.eq_rhs = eq_rhs;
  lp.lower = Vector::Constant(objective.size(), -kInfinity);
  lp.upper = Vector::Constant(objective.size(), kInfinity);
  return lp;
}

void StandardLp::validate() const {
  const Index n = num_vars();
  if (n <= 0) throw std::invalid_argument("StandardLp: no variables");
  if (ineq_matrix.cols() != n || eq_matrix.cols() != n) {
    throw std::invalid_argument("StandardLp: matrix column count != objective size");
  }
  if (ineq_matrix.rows() != ineq_rhs.size()) {
    throw std::invalid_argument("StandardLp: ineq_matrix rows != ineq_rhs size");
  }
  if (eq_matrix.rows() != eq_rhs.size()) {
    throw std::invalid_argument("StandardLp: eq_matrix rows != eq_rhs size");
  }
  if (lower.size() != n || upper.size() != n) {
    throw std::invalid_argument("StandardLp: bound vectors must match variable count");
  }
  check_no_nan(objective, "objective");
  check_no_nan(ineq_rhs, "ineq_rhs");
  check_no_nan(eq_rhs, "eq_rhs");
  check_no_nan(ineq_matrix, "ineq_matrix");
  check_no_nan(eq_matrix, "eq_matrix");
  for (Index j = 0; j < n; ++j) {
    if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j]) {
      throw std::invalid_argument("StandardLp: invalid bounds at variable " +
                                  std::to_string(j));
    }
  }
}

LpSolution solve_lp(const StandardLp& lp, const SolverConfig& cfg) {
  lp.validate();
  const ScaledLp sc = equilibrate(lp, cfg.equilibrate_rows);
  const Index rows = lp.num_ineq() + lp.num_eq();
  if (rows <= lp.num_vars()) return solve_primal_route(lp, sc, cfg);
  return solve_dual_route(lp, sc, cfg);
}

void MixedBinaryLp::validate() const {
  base.validate();
  for (const Index j : binary_indices) {
    if (j < 0 || j >= base.num_vars()) {
      throw std::invalid_argument("MixedBinaryLp: binary index out of range");
    }
  }
  for (Index i = 0; i < big_m_values.size(); ++i) {
    if (!(big_m_values[i] > 0.0)) {
      throw std::invalid_argument("MixedBinaryLp: big-M values must be positive");
    }
  }
}

MixedBinarySolution solve_mixed_binary(const MixedBinaryLp& milp,
                                       const SolverConfig& cfg) {
  milp.validate();
  const auto& bins = milp.binary_indices;
  const Index nb = static_cast<Index>(bins.size());

  StandardLp root = milp.base;
  for (const Index j : bins) {
    root.lower[j] = std::max(root.lower[j], 0.0);
    root.upper[j] = std::min(root.upper[j], 1.0);
  }

  struct Node {
    Vector lower, upper;
  };
  std::vector<Node> stack;
  stack.push_back({root.lower, root.upper});

  std::optional<MixedBinarySolution> incumbent;
  long nodes = 0;

  const auto integral = [&](const Vector& z) {
    for (const Index j : bins) {
      const double v = z[j];
      if (std::abs(v - std::round(v)) > cfg.integrality_tol) return false;
    }
    return true;
  };

  const auto accept = [&](const LpSolution& sol) {
    if (incumbent &&
        sol.objective_value >= incumbent->solution.objective_value - cfg.duality_gap_tol) {
      return;
    }
    MixedBinarySolution cand;
    cand.solution = sol;
    cand.binary_values.resize(nb);
    for (Index i = 0; i < nb; ++i) {
      cand.binary_values[i] = std::round(sol.primal[bins[static_cast<size_t>(i)]]);
    }
    cand.nodes_explored = nodes;
    incumbent = std::move(cand);
  };

  StandardLp work = root;
  while (!stack.empty()) {
    if (incumbent &&
        incumbent->solution.objective_value <= cfg.bnb_stop_objective) {
      break;
    }
    if (++nodes > cfg.node_limit) {
      throw NodeLimitExceeded("branch-and-bound node limit exceeded");
    }
    Node node = std::move(stack.back());
    stack.pop_back();

    work.lower = node.lower;
    work.upper = node.upper;
    LpSolution relax;
    try {
      relax = solve_lp(work, cfg);
    } catch (const NumericalFailure&) {
      continue;  // treat a numerically hopeless node as pruned
    }
    if (relax.status == LpStatus::Infeasible) continue;
    if (relax.status == LpStatus::Unbounded) {
      // Binaries are bounded, so the ray lives in the continuous part and
      // survives any further fixing.
      MixedBinarySolution out;
      out.solution.status = LpStatus::Unbounded;
      out.nodes_explored = nodes;
      return out;
    }
    if (incumbent && relax.objective_value >=
                         incumbent->solution.objective_value - cfg.duality_gap_tol) {
      continue;
    }
    if (integral(relax.primal)) {
      accept(relax);
      continue;
    }

    // Rounding heuristic: pin every binary to its nearest integer and
    // re-solve once. Often lands an incumbent early and tightens pruning.
    {
      StandardLp fixed = work;
      for (const Index j : bins) {
        const double v = std::round(std::clamp(relax.primal[j], 0.0, 1.0));
        fixed.lower[j] = v;
        fixed.upper[j] = v;
      }
      try {
        const LpSolution heur = solve_lp(fixed, cfg);
        if (heur.status == LpStatus::Optimal) accept(heur);
      } catch (const NumericalFailure&) {
      }
    }

    // Branch on the most fractional binary.
    Index branch_var = -1;
    double best_frac = cfg.integrality_tol;
    for (const Index j : bins) {
      if (node.upper[j] - node.lower[j] < 0.5) continue;  // already fixed
      const double frac = std::abs(relax.primal[j] - std::round(relax.primal[j]));
      if (frac > best_frac) {
        best_frac = frac;
        branch_var = j;
      }
    }
    if (branch_var < 0) continue;

    Node down = node, up = node;
    down.upper[branch_var] = 0.0;
    up.lower[branch_var] = 1.0;
    if (relax.primal[branch_var] >= 0.5) {
      stack.push_back(std::move(down));
      stack.push_back(std::move(up));  // explored first
    } else {
      stack.push_back(std::move(up));
      stack.push_back(std::move(down));
    }
  }

  if (!incumbent) {
    MixedBinarySolution out;
    out.solution.status = LpStatus::Infeasible;
    out.nodes_explored = nodes;
    return out;
  }
  incumbent->nodes_explored = nodes;
  return *incumbent;
}

void dump_standard_lp(const StandardLp& lp, std::ostream& os) {
  const auto fixed = [&os](double v) {
    os << std::setw(20) << std::fixed << std::setprecision(10) << v;
  };
  os << "minimize\n";
  for (Index j = 0; j < lp.num_vars(); ++j) fixed(lp.objective[j]);
  os << "\nsubject to (inequalities, equalities, bounds)\n";
  const Matrix gd = Matrix(lp.ineq_matrix);
  for (Index i = 0; i < lp.num_ineq(); ++i) {
    for (Index j = 0; j < lp.num_vars(); ++j) fixed(gd(i, j));
    os << "  <= ";
    fixed(lp.ineq_rhs[i]);
    os << "\n";
  }
  const Matrix ed = Matrix(lp.eq_matrix);
  for (Index i = 0; i < lp.num_eq(); ++i) {
    for (Index j = 0; j < lp.num_vars(); ++j) fixed(ed(i, j));
    os << "  == ";
    fixed(lp.eq_rhs[i]);
    os << "\n";
  }
  for (Index j = 0; j < lp.num_vars(); ++j) {
    fixed(lp.lower[j]);
    os << " <= z_" << j << " <= ";
    fixed(lp.upper[j]);
    os << "\n";
  }
}

}  // namespace idro
