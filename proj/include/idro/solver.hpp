#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idro/types.hpp"

namespace idro {

/// Central numerical tolerances shared by every solve in the toolkit.
/// Callers may inject a modified copy; the defaults are the contract the
/// rest of the library is tested against.
struct SolverConfig {
  double feasibility_tol = 1e-8;   // absolute, per row after equilibration
  double optimality_tol = 1e-9;    // reduced-cost threshold
  double integrality_tol = 1e-6;   // binary roundoff in branch and bound
  double duality_gap_tol = 1e-8;   // relative duality gap
  double pivot_tol = 1e-9;         // minimum acceptable pivot magnitude
  long max_iterations = 0;         // 0 = derived from problem size
  long node_limit = 1000000;       // branch-and-bound node budget
  int refactor_interval = 400;     // basis refactorization cadence
  bool equilibrate_rows = true;    // scale each row by its max-abs entry
  // Branch and bound returns as soon as an incumbent reaches this value;
  // -inf keeps the search exact.
  double bnb_stop_objective = -kInfinity;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pivoting could not make progress within tolerance, or the iteration
/// budget ran out. Usually a sign of severe ill-conditioning.
class NumericalFailure : public SolverError {
 public:
  using SolverError::SolverError;
};

class NodeLimitExceeded : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Linear program
///   min  objective' z
///   s.t. ineq_matrix z <= ineq_rhs
///        eq_matrix   z == eq_rhs
///        lower <= z <= upper   (either side may be infinite)
struct StandardLp {
  Vector objective;
  SparseMatrix ineq_matrix;
  Vector ineq_rhs;
  SparseMatrix eq_matrix;
  Vector eq_rhs;
  Vector lower;
  Vector upper;

  Index num_vars() const { return objective.size(); }
  Index num_ineq() const { return ineq_rhs.size(); }
  Index num_eq() const { return eq_rhs.size(); }

  /// Convenience builder from dense blocks; bounds default to free.
  static StandardLp from_dense(const Vector& objective, const Matrix& ineq,
                               const Vector& ineq_rhs, const Matrix& eq = Matrix(0, 0),
                               const Vector& eq_rhs = Vector(0));

  /// Throws std::invalid_argument on inconsistent dimensions or NaN entries.
  void validate() const;
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Vector primal;
  Vector dual_ineq;   // >= 0, one per inequality row
  Vector dual_eq;     // free, one per equality row
  Vector dual_lower;  // >= 0, multipliers of active lower bounds
  Vector dual_upper;  // >= 0, multipliers of active upper bounds
  double objective_value = 0.0;
  long iterations = 0;
};

/// Solves the LP with a revised simplex. The method works on whichever of
/// the primal or its dual has the smaller basis, so instances with far more
/// rows than columns (or vice versa) stay cheap. Deterministic for
/// identical inputs.
LpSolution solve_lp(const StandardLp& lp, const SolverConfig& cfg = {});

/// LP plus a set of variables restricted to {0, 1}. big_m_values carries
/// the per-complementarity-pair constants used by callers that encode
/// disjunctions; the solver itself treats them as data for audits.
struct MixedBinaryLp {
  StandardLp base;
  std::vector<Index> binary_indices;
  Vector big_m_values;

  void validate() const;
};

struct MixedBinarySolution {
  LpSolution solution;   // LP solution of the incumbent leaf
  Vector binary_values;  // one entry per binary_indices element
  long nodes_explored = 0;
};

/// Relaxation-based branch and bound. Returns the global optimum with all
/// binaries integral within integrality_tol. Throws NodeLimitExceeded when
/// the node budget is exhausted.
MixedBinarySolution solve_mixed_binary(const MixedBinaryLp& milp,
                                       const SolverConfig& cfg = {});

/// Plain-text fixed-point dump for external cross-checking.
/// Row order: inequalities, then equalities, then variable bounds.
void dump_standard_lp(const StandardLp& lp, std::ostream& os);

}  // namespace idro
