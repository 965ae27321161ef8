#pragma once

#include <string>

#include "idro/ambiguity.hpp"
#include "idro/model.hpp"
#include "idro/solver.hpp"
#include "idro/types.hpp"

namespace idro {

/// Index map of the assembled convex program. Variables are laid out as
/// [x (n) | tau (1) | lambda (m) | s (N_s*m, sample-major)]; rows as
/// [ordinary (incl. folded box bounds) | CVaR | family rows for the sample,
/// corner-upper and corner-lower cuts indexed (i, k, j) with k = 0..N_cc |
/// lambda sign rows].
struct FdroLayout {
  Index n = 0;           // decision variables
  Index m = 0;           // uncertainty coordinates
  Index n_samples = 0;   // N_s
  Index n_cc = 0;        // chance rows of the source model
  Index n_ordinary = 0;  // ordinary rows after folding box bounds

  Index tau() const { return n; }
  Index lambda_slot(Index j) const { return n + 1 + j; }
  Index s_slot(Index i, Index j) const { return n + 1 + m + i * m + j; }
  Index num_vars() const { return n + 1 + m + n_samples * m; }

  Index cvar_row() const { return n_ordinary; }
  Index family_size() const { return n_samples * (n_cc + 1) * m; }
  Index family_row(Index family, Index i, Index k, Index j) const {
    return n_ordinary + 1 + family * family_size() + (i * (n_cc + 1) + k) * m + j;
  }
  Index lambda_row(Index j) const { return n_ordinary + 1 + 3 * family_size() + j; }
  Index num_rows() const { return n_ordinary + 1 + 3 * family_size() + m; }
};

/// The assembled finite convex program for one radius value. Immutable;
/// carries everything needed to materialize the LP or evaluate KKT blocks.
struct FdroInstance {
  CcLinearProgram model;
  SampleSet samples;
  double epsilon = 0.0;
  FdroLayout layout;

  Matrix ordinary_matrix;  // model.a with box-bound rows folded in
  Vector ordinary_rhs;
  Matrix dist_upper;  // |upper_j - xi_ij|, one row per sample
  Matrix dist_lower;  // |lower_j - xi_ij|
};

/// Full primal-dual candidate with the radius it refers to. The dual vector
/// covers every assembled row (theta, mu, the three phi families, eta) in
/// layout order.
struct KktPoint {
  Vector primal;
  Vector dual;
  double epsilon = 0.0;
};

/// Per-block max-abs residuals of the first-order conditions. Stationarity
/// blocks are generated mechanically from the assembled matrices.
struct KktResiduals {
  double stationarity_x = 0.0;
  double stationarity_tau = 0.0;
  double stationarity_lambda = 0.0;
  double stationarity_s = 0.0;
  double comp_ordinary = 0.0;
  double comp_cvar = 0.0;
  double comp_family_sample = 0.0;
  double comp_family_upper = 0.0;
  double comp_family_lower = 0.0;
  double comp_lambda_sign = 0.0;
  double primal_feasibility = 0.0;
  double dual_feasibility = 0.0;

  double max_abs() const;
};

struct ForwardOptions {
  SolverConfig solver;
  double binding_tol = 1e-7;  // on the CVaR row after row scaling
  // The returned vertex may leave the CVaR row tight even when other
  // optimal auxiliaries would not, so the binding flag is classified by
  // maximizing the row slack over the optimal set (one extra LP). Callers
  // that only need the objective can switch this off; the flag then
  // reflects the returned vertex only.
  bool classify_binding = true;
};

struct ForwardSolution {
  FdroInstance instance;
  Vector x_opt;
  double tau = 0.0;
  Vector lambda;
  Matrix s;  // N_s x m
  KktPoint point;
  double objective = 0.0;
  bool cvar_binding = false;
  double cvar_slack = 0.0;  // rhs minus activity, >= 0 at feasible points
};

enum class ObservationStatus { Optimal, FeasibleOnly, Infeasible };

struct ObservationCertificate {
  ObservationStatus status = ObservationStatus::Infeasible;
  double observed_cost = 0.0;
  double forward_objective = 0.0;
  double gap = 0.0;  // observed_cost - forward_objective
};

FdroInstance assemble(const CcLinearProgram& model, const SampleSet& samples,
                      double epsilon);

/// Materializes the instance as a StandardLp whose rows follow the layout.
StandardLp to_standard_lp(const FdroInstance& inst);

/// Restriction of the instance to a fixed decision: variables (tau, lambda,
/// s) only, x-contributions moved to the right-hand side. Objective zero.
StandardLp restriction_lp(const FdroInstance& inst, const Vector& x0);

ForwardSolution solve_forward(const FdroInstance& inst, const ForwardOptions& opts = {});

/// Minimum achievable CVaR-row value over the auxiliaries at a fixed
/// decision, with the row itself lifted out of the constraint set. The
/// restriction is feasible at this radius iff the minimum is <= 0. The
/// radius enters the program only through this row, so the reported
/// multiplier sum turns the minimizer into an affine-in-radius feasibility
/// certificate: value(eps') <= value + (eps' - eps) * lambda_sum / gamma.
struct CvarFloor {
  double value = 0.0;
  double lambda_sum = 0.0;
};
CvarFloor min_cvar_row(const FdroInstance& inst, const Vector& x0,
                       const SolverConfig& cfg = {});

KktResiduals kkt_residuals(const FdroInstance& inst, const KktPoint& point);

ObservationCertificate is_observation_optimal(const CcLinearProgram& model,
                                              const SampleSet& samples, double epsilon,
                                              const Observation& obs,
                                              const ForwardOptions& opts = {});

/// JSON export of a forward solution (x, tau, lambda, s, duals, objective,
/// cvar_binding, cvar_slack).
std::string to_json(const ForwardSolution& sol);
void save_forward_solution(const ForwardSolution& sol, const std::string& path);

}  // namespace idro
