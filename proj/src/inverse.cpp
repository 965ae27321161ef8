#include "idro/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>

#include <nlohmann/json.hpp>

namespace idro {

namespace {

constexpr double kOptimalityRelTol = 1e-7;

/// Restriction-feasibility probe with witness reuse. The radius enters the
/// assembled program only through the CVaR row, so the minimizing
/// auxiliaries of one probe certify feasibility at nearby larger radii
/// through an affine bound, skipping most LP solves of a bisection sweep.
class FeasibilityOracle {
 public:
  FeasibilityOracle(const CcLinearProgram& model, const SampleSet& samples,
                    const Vector& x0, const SolverConfig& solver)
      : model_(model), samples_(samples), x0_(x0), solver_(solver) {}

  bool feasible(double eps) {
    constexpr double tol = 1e-9;
    if (witness_eps_ <= eps &&
        witness_value_ + (eps - witness_eps_) * witness_slope_ <= -tol) {
      return true;
    }
    const FdroInstance inst = assemble(model_, samples_, eps);
    const CvarFloor floor = min_cvar_row(inst, x0_, solver_);
    const bool ok = floor.value <= tol;
    if (ok && eps >= witness_eps_) {
      witness_eps_ = eps;
      witness_value_ = floor.value;
      witness_slope_ = floor.lambda_sum / model_.gamma;
    }
    return ok;
  }

 private:
  const CcLinearProgram& model_;
  const SampleSet& samples_;
  const Vector& x0_;
  const SolverConfig& solver_;
  double witness_eps_ = kInfinity;  // no witness yet
  double witness_value_ = kInfinity;
  double witness_slope_ = 0.0;
};

struct EngineContext {
  const CcLinearProgram& model;
  const SampleSet& samples;
  const Observation& obs;
  const RecoveryConfig& cfg;
  double observed_cost = 0.0;
  std::vector<TraceEntry>* trace = nullptr;
  int* iterations = nullptr;
  FeasibilityOracle* oracle = nullptr;
};

void guard_config(const CcLinearProgram& model, const SampleSet& samples,
                  const Observation& obs, const RecoveryConfig& cfg) {
  require_valid(model);
  samples.validate();
  if (obs.x0.size() != model.num_vars()) {
    throw std::invalid_argument("recover: observation length does not match the model");
  }
  const double cap = epsilon_max(samples);
  if (cfg.epsilon_bar < cap) {
    throw ConfigError("epsilon_bar = " + std::to_string(cfg.epsilon_bar) +
                      " is below the critical radius " + std::to_string(cap) +
                      " of the samples; raise it so a result at the cap stays a "
                      "failure indicator");
  }
}

/// Binding status reported at a recovered radius. The boundary is located
/// only to bisection tolerance, so the probe sits at the top edge of the
/// bracket where the row that stopped the feasibility sweep has priced in.
bool binding_at(const CcLinearProgram& model, const SampleSet& samples, double eps,
                const RecoveryConfig& cfg) {
  const double probe = std::min(cfg.epsilon_bar, eps + cfg.bisection_tol);
  return solve_forward(assemble(model, samples, probe), cfg.forward).cvar_binding;
}

double forward_objective(const EngineContext& ctx, double eps) {
  ForwardOptions opts = ctx.cfg.forward;
  opts.classify_binding = false;  // objective only
  return solve_forward(assemble(ctx.model, ctx.samples, eps), opts).objective;
}

/// Bisection for the supremum of a down-closed predicate on [0, eps_bar].
/// `first_probe` seeds the first midpoint (the critical radius is almost
/// always an upper bound for the boundary, which saves a third of the
/// probes). Returns the final bracket [lo, hi], lo feasible, hi not.
template <typename Predicate>
std::pair<double, double> bisect_boundary(double eps_bar, double tol,
                                          std::optional<double> first_probe,
                                          Predicate&& feasible) {
  double lo = 0.0;
  double hi = eps_bar;
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (first_probe) {
      if (*first_probe > lo + tol && *first_probe < hi - tol) mid = *first_probe;
      first_probe.reset();
    }
    if (feasible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Bisection engine
// ---------------------------------------------------------------------------

bool restriction_feasible(const EngineContext& ctx, double eps) {
  const bool ok = ctx.oracle->feasible(eps);
  if (ctx.trace) {
    ctx.trace->push_back({eps, ok ? TraceVerdict::Feasible : TraceVerdict::Infeasible});
  }
  if (ctx.iterations) ++*ctx.iterations;
  return ok;
}

/// Optimality test at the feasible end of the final bracket. The boundary
/// radius may be the only point where the observation is exactly optimal,
/// so the probe sits up to one bracket width below it; the acceptance
/// threshold grows with the locally estimated slope of the forward value.
bool certify_boundary_by_objective(const EngineContext& ctx, double lo, double bracket,
                                   double* forward_at_lo) {
  const double j_lo = forward_objective(ctx, lo);
  if (forward_at_lo) *forward_at_lo = j_lo;
  const double gap = ctx.observed_cost - j_lo;
  const double abs_tol = kOptimalityRelTol * (1.0 + std::abs(ctx.observed_cost));
  if (ctx.iterations) ++*ctx.iterations;
  if (gap <= abs_tol) return true;

  const double step = std::max(100.0 * bracket, 1e-3 * (1.0 + lo));
  const double j_above = forward_objective(ctx, lo + step);
  if (ctx.iterations) ++*ctx.iterations;
  const double slope = std::max(0.0, (j_above - j_lo) / step);
  const double allowance = abs_tol + 4.0 * slope * (bracket + ctx.cfg.bisection_tol);
  return gap <= allowance;
}

RecoveryReport run_bisection(const CcLinearProgram& model, const SampleSet& samples,
                             const Observation& obs, const RecoveryConfig& cfg) {
  guard_config(model, samples, obs, cfg);
  RecoveryReport report;
  report.engine = "bisection";

  FeasibilityOracle oracle(model, samples, obs.x0, cfg.forward.solver);
  EngineContext ctx{model, samples, obs, cfg, model.cost.dot(obs.x0), &report.trace,
                    &report.iterations, &oracle};

  // One probe at the cap short-circuits the failure case.
  if (restriction_feasible(ctx, cfg.epsilon_bar)) {
    const FdroInstance inst = assemble(model, samples, cfg.epsilon_bar);
    const ForwardSolution fwd = solve_forward(inst, cfg.forward);
    ++report.iterations;
    const double tol = kOptimalityRelTol * (1.0 + std::abs(fwd.objective));
    if (ctx.observed_cost - fwd.objective <= tol) {
      report.trace.push_back({cfg.epsilon_bar, TraceVerdict::Optimal});
      report.epsilon_star = cfg.epsilon_bar;
      report.failed = true;
      report.binding_at_star = fwd.cvar_binding;
      return report;
    }
    report.trace.push_back({cfg.epsilon_bar, TraceVerdict::NotOptimal});
    throw ObservationNotRationalizable(
        "observation stays feasible at epsilon_bar but never reaches the forward "
        "optimum (gap " +
        std::to_string(ctx.observed_cost - fwd.objective) + ")");
  }

  if (!restriction_feasible(ctx, 0.0)) {
    throw ObservationNotRationalizable(
        "observation is infeasible for the restriction at every radius");
  }

  const double cap = epsilon_max(samples);
  const auto [lo, hi] =
      bisect_boundary(cfg.epsilon_bar, cfg.bisection_tol,
                      cap < cfg.epsilon_bar ? std::optional<double>(cap) : std::nullopt,
                      [&](double eps) { return restriction_feasible(ctx, eps); });

  double j_lo = 0.0;
  if (!certify_boundary_by_objective(ctx, lo, hi - lo, &j_lo)) {
    report.trace.push_back({lo, TraceVerdict::NotOptimal});
    throw ObservationNotRationalizable(
        "observation is feasible up to radius " + std::to_string(hi) +
        " but is never cost-optimal (gap " + std::to_string(ctx.observed_cost - j_lo) +
        ")");
  }
  report.trace.push_back({lo, TraceVerdict::Optimal});

  report.epsilon_star = 0.5 * (lo + hi);
  report.failed = false;
  report.binding_at_star = binding_at(model, samples, report.epsilon_star, cfg);
  return report;
}

// ---------------------------------------------------------------------------
// KKT-MILP engine
// ---------------------------------------------------------------------------

/// Big-M constants per complementarity pair, taken from the solver-reported
/// duals and slacks of the forward solve at epsilon_bar, times the
/// configured scale.
struct BigM {
  Vector dual;
  Vector slack;
};

BigM derive_big_m(const ForwardSolution& at_bar, const StandardLp& lp_at_bar,
                  double scale) {
  const Index rows = lp_at_bar.num_ineq();
  BigM m;
  m.dual.resize(rows);
  m.slack.resize(rows);
  const Vector activity = lp_at_bar.ineq_matrix * at_bar.point.primal;
  for (Index r = 0; r < rows; ++r) {
    m.dual[r] = scale * std::max(1.0, std::abs(at_bar.point.dual[r]));
    m.slack[r] = scale * std::max(1.0, std::abs(lp_at_bar.ineq_rhs[r] - activity[r]));
  }
  return m;
}

enum class KktMode { PrimalOnly, Exact, Elastic };

/// Encodes the first-order system of the assembled program with the
/// decision pinned to the observation, at one fixed radius:
///   - primal feasibility of (tau, lambda, s),
///   - stationarity of the full Lagrangian in every variable block,
///   - one binary + big-M disjunction per complementarity pair,
///   - a duality-gap row (valid cut implied by complementarity) that keeps
///     the relaxation tight,
///   - in Elastic mode, a nonnegative slack on each condition, minimized.
/// Variable order: [pf | y | z | slack_stat | slack_dual | slack_row | gap].
struct KktSystem {
  MixedBinaryLp milp;
  Index n_pf = 0;
  Index y_begin = 0;
  Index z_begin = 0;
  Index slack_begin = 0;  // first slack column (Elastic), one past z otherwise
};

KktSystem build_kkt_system(const FdroInstance& inst, const Vector& x0, const BigM& bigm,
                           KktMode mode) {
  const FdroLayout& lay = inst.layout;
  const StandardLp restricted = restriction_lp(inst, x0);
  const Index n_pf = lay.num_vars() - lay.n;

  if (mode == KktMode::PrimalOnly) {
    KktSystem sys;
    sys.n_pf = n_pf;
    sys.milp.base = restricted;
    return sys;
  }

  const StandardLp full = to_standard_lp(inst);
  const Index rows = full.num_ineq();
  const Index n_stat = lay.num_vars();

  const bool elastic = mode == KktMode::Elastic;
  const Index y0 = n_pf;
  const Index z0 = y0 + rows;
  const Index s_stat = z0 + rows;                      // n_stat slots
  const Index s_dual = s_stat + (elastic ? n_stat : 0);  // rows slots
  const Index s_row = s_dual + (elastic ? rows : 0);
  const Index s_gap = s_row + (elastic ? rows : 0);
  const Index n_cols = s_gap + (elastic ? 1 : 0);

  std::vector<Triplet> trips;
  std::vector<double> rhs;
  std::vector<Triplet> eq_trips;
  std::vector<double> eq_rhs;
  Index row = 0;

  // (a) primal feasibility of the restriction.
  for (Index c = 0; c < restricted.ineq_matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(restricted.ineq_matrix, c); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Index r = 0; r < rows; ++r) rhs.push_back(restricted.ineq_rhs[r]);
  row = rows;

  // (b) stationarity: c_full + G' y = 0, elastic within +-slack_stat.
  Vector c_full = Vector::Zero(lay.num_vars());
  c_full.head(lay.n) = inst.model.cost;
  if (!elastic) {
    for (Index c = 0; c < full.ineq_matrix.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(full.ineq_matrix, c); it; ++it) {
        eq_trips.emplace_back(it.col(), y0 + it.row(), it.value());
      }
    }
    for (Index v = 0; v < n_stat; ++v) eq_rhs.push_back(-c_full[v]);
  } else {
    // G'y - slack <= -c and -G'y - slack <= c.
    for (Index c = 0; c < full.ineq_matrix.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(full.ineq_matrix, c); it; ++it) {
        trips.emplace_back(row + it.col(), y0 + it.row(), it.value());
        trips.emplace_back(row + n_stat + it.col(), y0 + it.row(), -it.value());
      }
    }
    for (Index v = 0; v < n_stat; ++v) {
      trips.emplace_back(row + v, s_stat + v, -1.0);
      trips.emplace_back(row + n_stat + v, s_stat + v, -1.0);
    }
    for (Index v = 0; v < n_stat; ++v) rhs.push_back(-c_full[v]);
    for (Index v = 0; v < n_stat; ++v) rhs.push_back(c_full[v]);
    row += 2 * n_stat;
  }

  // (c) complementarity disjunctions: y_r <= M z_r (+ slack_dual),
  //     rhs'_r - G'_r p <= M (1 - z_r) (+ slack_row).
  for (Index r = 0; r < rows; ++r) {
    trips.emplace_back(row, y0 + r, 1.0);
    trips.emplace_back(row, z0 + r, -bigm.dual[r]);
    if (elastic) trips.emplace_back(row, s_dual + r, -1.0);
    rhs.push_back(0.0);
    ++row;
  }
  for (Index c = 0; c < restricted.ineq_matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(restricted.ineq_matrix, c); it; ++it) {
      trips.emplace_back(row + it.row(), it.col(), -it.value());
    }
  }
  for (Index r = 0; r < rows; ++r) {
    trips.emplace_back(row + r, z0 + r, bigm.slack[r]);
    if (elastic) trips.emplace_back(row + r, s_row + r, -1.0);
    rhs.push_back(bigm.slack[r] - restricted.ineq_rhs[r]);
  }
  row += rows;

  // (d) duality gap: c'x0 + h'y <= 0 (+ slack_gap). Weak duality gives the
  // reverse direction, so together with (b) this pins the optimal pairing.
  {
    const double cx0 = inst.model.cost.dot(x0);
    for (Index r = 0; r < rows; ++r) {
      if (full.ineq_rhs[r] != 0.0) trips.emplace_back(row, y0 + r, full.ineq_rhs[r]);
    }
    if (elastic) trips.emplace_back(row, s_gap, -1.0);
    rhs.push_back(-cx0);
    ++row;
  }

  KktSystem sys;
  sys.n_pf = n_pf;
  sys.y_begin = y0;
  sys.z_begin = z0;
  sys.slack_begin = s_stat;

  StandardLp& base = sys.milp.base;
  base.objective = Vector::Zero(n_cols);
  if (elastic) {
    for (Index c = s_stat; c < n_cols; ++c) base.objective[c] = 1.0;
  }
  base.ineq_matrix.resize(row, n_cols);
  base.ineq_matrix.setFromTriplets(trips.begin(), trips.end());
  base.ineq_rhs = Eigen::Map<const Vector>(rhs.data(), static_cast<Index>(rhs.size()));
  base.eq_matrix.resize(static_cast<Index>(eq_rhs.size()), n_cols);
  base.eq_matrix.setFromTriplets(eq_trips.begin(), eq_trips.end());
  base.eq_rhs =
      Eigen::Map<const Vector>(eq_rhs.data(), static_cast<Index>(eq_rhs.size()));
  base.lower = Vector::Constant(n_cols, -kInfinity);
  base.upper = Vector::Constant(n_cols, kInfinity);
  base.lower.segment(y0, rows).setZero();           // dual feasibility
  base.lower.segment(z0, rows).setZero();           // binaries
  base.upper.segment(z0, rows).setOnes();
  if (elastic) base.lower.tail(n_cols - s_stat).setZero();

  sys.milp.binary_indices.reserve(static_cast<size_t>(rows));
  for (Index r = 0; r < rows; ++r) sys.milp.binary_indices.push_back(z0 + r);
  sys.milp.big_m_values.resize(2 * rows);
  sys.milp.big_m_values.head(rows) = bigm.dual;
  sys.milp.big_m_values.tail(rows) = bigm.slack;
  return sys;
}

/// LP scoring the first-order violation of a (possibly noisy) observation
/// at one radius: min sum of stationarity slacks plus the duality-gap
/// slack, subject to hard primal feasibility of (tau, lambda, s) and dual
/// sign constraints. Columns: [pf | y | slack_stat (per variable) | gap].
StandardLp relaxed_slack_lp(const FdroInstance& inst, const Vector& x0) {
  const FdroLayout& lay = inst.layout;
  const StandardLp restricted = restriction_lp(inst, x0);
  const StandardLp full = to_standard_lp(inst);
  const Index n_pf = lay.num_vars() - lay.n;
  const Index rows = full.num_ineq();
  const Index n_stat = lay.num_vars();
  const Index y0 = n_pf;
  const Index s0 = y0 + rows;
  const Index gap = s0 + n_stat;
  const Index n_cols = gap + 1;

  std::vector<Triplet> trips;
  std::vector<double> rhs;
  for (Index c = 0; c < restricted.ineq_matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(restricted.ineq_matrix, c); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Index r = 0; r < rows; ++r) rhs.push_back(restricted.ineq_rhs[r]);
  Index row = rows;

  Vector c_full = Vector::Zero(n_stat);
  c_full.head(lay.n) = inst.model.cost;
  for (Index c = 0; c < full.ineq_matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(full.ineq_matrix, c); it; ++it) {
      trips.emplace_back(row + it.col(), y0 + it.row(), it.value());
      trips.emplace_back(row + n_stat + it.col(), y0 + it.row(), -it.value());
    }
  }
  for (Index v = 0; v < n_stat; ++v) {
    trips.emplace_back(row + v, s0 + v, -1.0);
    trips.emplace_back(row + n_stat + v, s0 + v, -1.0);
  }
  for (Index v = 0; v < n_stat; ++v) rhs.push_back(-c_full[v]);
  for (Index v = 0; v < n_stat; ++v) rhs.push_back(c_full[v]);
  row += 2 * n_stat;

  for (Index r = 0; r < rows; ++r) {
    if (full.ineq_rhs[r] != 0.0) trips.emplace_back(row, y0 + r, full.ineq_rhs[r]);
  }
  trips.emplace_back(row, gap, -1.0);
  rhs.push_back(-inst.model.cost.dot(x0));
  ++row;

  StandardLp lp;
  lp.objective = Vector::Zero(n_cols);
  lp.objective.tail(n_stat + 1).setOnes();
  lp.ineq_matrix.resize(row, n_cols);
  lp.ineq_matrix.setFromTriplets(trips.begin(), trips.end());
  lp.ineq_rhs = Eigen::Map<const Vector>(rhs.data(), static_cast<Index>(rhs.size()));
  lp.eq_matrix.resize(0, n_cols);
  lp.eq_rhs = Vector(0);
  lp.lower = Vector::Constant(n_cols, -kInfinity);
  lp.upper = Vector::Constant(n_cols, kInfinity);
  lp.lower.segment(y0, rows).setZero();
  lp.lower.tail(n_stat + 1).setZero();
  return lp;
}

// A dual sitting at its big-M means the multiplier was truncated and the
// certificate cannot be trusted: error out rather than return it. Slack
// caps are not audited; the auxiliaries are free in cost-null directions,
// so a vertex may rest on an inert cap of a dual-zero pair without
// weakening any condition the slack budget checks.
void audit_big_m(const KktSystem& sys, const MixedBinarySolution& sol,
                 const BigM& bigm) {
  const Index rows = bigm.dual.size();
  for (Index r = 0; r < rows; ++r) {
    const double y = sol.solution.primal[sys.y_begin + r];
    if (y > 0.99 * bigm.dual[r]) {
      throw SolverError("big-M audit: dual of pair " + std::to_string(r) +
                        " sits within 1% of its bound; increase big_m_scale");
    }
  }
}

struct Certification {
  bool certified = false;
  double total_slack = 0.0;
  long nodes = 0;
};

Certification certify_kkt(const EngineContext& ctx, double eps, const BigM& bigm_seed) {
  const FdroInstance inst = assemble(ctx.model, ctx.samples, eps);
  const double budget =
      ctx.cfg.certification_tol * (1.0 + std::abs(ctx.observed_cost));
  const Index rows = bigm_seed.dual.size();
  const Index n_pf = inst.layout.num_vars() - inst.layout.n;
  Certification out;

  // Stage 1: the relaxed LP (complementarity folded into the duality-gap
  // row) yields a near-complementary pair whenever one exists. Its slacks
  // also widen the slack-side big-M bounds: the auxiliaries are free in the
  // directions the cost ignores, so the bounds observed at epsilon_bar do
  // not cover every legitimate point.
  const StandardLp relaxed = relaxed_slack_lp(inst, ctx.obs.x0);
  const LpSolution guess = solve_lp(relaxed, ctx.cfg.forward.solver);
  BigM bigm = bigm_seed;
  std::optional<Vector> guess_slack;
  if (guess.status == LpStatus::Optimal) {
    const Vector activity = relaxed.ineq_matrix * guess.primal;
    guess_slack = Vector(rows);
    for (Index r = 0; r < rows; ++r) {
      (*guess_slack)[r] = relaxed.ineq_rhs[r] - activity[r];
      bigm.slack[r] = std::max(
          bigm.slack[r], ctx.cfg.big_m_scale * std::max(1.0, (*guess_slack)[r]));
      // Duals at the recovered radius routinely exceed those observed at
      // epsilon_bar, so the candidate certificate widens the dual side too.
      const double y_r = guess.primal[n_pf + r];
      bigm.dual[r] =
          std::max(bigm.dual[r], ctx.cfg.big_m_scale * std::max(1.0, y_r));
    }
  }

  const KktSystem sys = build_kkt_system(inst, ctx.obs.x0, bigm, KktMode::Elastic);

#ifdef IDRO_CERTIFY_DEBUG
  fprintf(stderr, "[certify] eps=%.6g budget=%.3g guess_status=%d guess_obj=%.3g\n",
          eps, budget, int(guess.status),
          guess.status == LpStatus::Optimal ? guess.objective_value : -1.0);
#endif

  // Stage 2: pin the binaries to the pattern read off the relaxed pair and
  // settle the certificate with one more LP; branch and bound only runs
  // when the guess misses.
  if (guess_slack) {
    StandardLp pinned = sys.milp.base;
    for (Index r = 0; r < rows; ++r) {
      const double dual_r = guess.primal[sys.n_pf + r];
      const double z =
          dual_r * bigm.slack[r] > (*guess_slack)[r] * bigm.dual[r] ? 1.0 : 0.0;
      pinned.lower[sys.z_begin + r] = z;
      pinned.upper[sys.z_begin + r] = z;
    }
    const LpSolution pattern = solve_lp(pinned, ctx.cfg.forward.solver);
#ifdef IDRO_CERTIFY_DEBUG
    fprintf(stderr, "[certify] pattern_status=%d pattern_obj=%.6g\n",
            int(pattern.status),
            pattern.status == LpStatus::Optimal ? pattern.objective_value : -1.0);
#endif
    if (pattern.status == LpStatus::Optimal && pattern.objective_value <= budget) {
      MixedBinarySolution as_milp;
      as_milp.solution = pattern;
      out.total_slack = pattern.objective_value;
      out.certified = true;
      audit_big_m(sys, as_milp, bigm);
      return out;
    }
  }

  SolverConfig scfg = ctx.cfg.forward.solver;
  scfg.bnb_stop_objective = budget;
  scfg.node_limit = std::min<long>(scfg.node_limit, 2000);
  try {
    const MixedBinarySolution sol = solve_mixed_binary(sys.milp, scfg);
    out.nodes = sol.nodes_explored;
    if (sol.solution.status == LpStatus::Optimal) {
      out.total_slack = sol.solution.objective_value;
      out.certified = out.total_slack <= budget;
      if (out.certified) audit_big_m(sys, sol, bigm);
    }
  } catch (const NodeLimitExceeded&) {
    out.certified = false;
  }
  return out;
}

bool kkt_primal_feasible(const EngineContext& ctx, double eps) {
  return restriction_feasible(ctx, eps);
}

RecoveryReport run_kkt_milp(const CcLinearProgram& model, const SampleSet& samples,
                            const Observation& obs, const RecoveryConfig& cfg) {
  guard_config(model, samples, obs, cfg);
  RecoveryReport report;
  report.engine = "kkt-milp";

  FeasibilityOracle oracle(model, samples, obs.x0, cfg.forward.solver);
  EngineContext ctx{model, samples, obs, cfg, model.cost.dot(obs.x0), &report.trace,
                    &report.iterations, &oracle};

  const FdroInstance at_bar = assemble(model, samples, cfg.epsilon_bar);
  if (at_bar.layout.num_rows() > cfg.milp_pair_limit) {
    throw ConfigError("instance has " + std::to_string(at_bar.layout.num_rows()) +
                      " complementarity pairs, above the limit " +
                      std::to_string(cfg.milp_pair_limit) +
                      " of the KKT-MILP engine; use the bisection engine");
  }
  const ForwardSolution fwd_bar = solve_forward(at_bar, cfg.forward);
  const BigM bigm = derive_big_m(fwd_bar, to_standard_lp(at_bar), cfg.big_m_scale);

  if (kkt_primal_feasible(ctx, cfg.epsilon_bar)) {
    const Certification cert = certify_kkt(ctx, cfg.epsilon_bar, bigm);
    ++report.iterations;
    if (!cert.certified) {
      throw ObservationNotRationalizable(
          "first-order system rejects the observation at epsilon_bar (slack " +
          std::to_string(cert.total_slack) + ")");
    }
    report.trace.push_back({cfg.epsilon_bar, TraceVerdict::Optimal});
    report.epsilon_star = cfg.epsilon_bar;
    report.failed = true;
    report.binding_at_star = fwd_bar.cvar_binding;
    return report;
  }
  if (!kkt_primal_feasible(ctx, 0.0)) {
    throw ObservationNotRationalizable(
        "observation is infeasible for the restriction at every radius");
  }

  const double cap = epsilon_max(samples);
  const auto [lo, hi] =
      bisect_boundary(cfg.epsilon_bar, cfg.bisection_tol,
                      cap < cfg.epsilon_bar ? std::optional<double>(cap) : std::nullopt,
                      [&](double eps) { return kkt_primal_feasible(ctx, eps); });

  const Certification cert = certify_kkt(ctx, lo, bigm);
  ++report.iterations;
  if (!cert.certified) {
    report.trace.push_back({lo, TraceVerdict::NotOptimal});
    throw ObservationNotRationalizable(
        "no dual certificate at the feasibility boundary (slack " +
        std::to_string(cert.total_slack) + ")");
  }
  report.trace.push_back({lo, TraceVerdict::Optimal});
  report.epsilon_star = 0.5 * (lo + hi);
  report.failed = false;
  report.total_slack = cert.total_slack;
  report.binding_at_star = binding_at(model, samples, report.epsilon_star, cfg);
  return report;
}

}  // namespace

RecoveryReport recover_bisection(const CcLinearProgram& model, const SampleSet& samples,
                                 const Observation& obs, const RecoveryConfig& cfg) {
  return run_bisection(model, samples, obs, cfg);
}

RecoveryReport recover_kkt_milp(const CcLinearProgram& model, const SampleSet& samples,
                                const Observation& obs, const RecoveryConfig& cfg) {
  return run_kkt_milp(model, samples, obs, cfg);
}

RecoveryReport recover(const CcLinearProgram& model, const SampleSet& samples,
                       const Observation& obs, const RecoveryConfig& cfg) {
  switch (cfg.engine) {
    case RecoveryEngine::Bisection:
      return recover_bisection(model, samples, obs, cfg);
    case RecoveryEngine::KktMilp:
      return recover_kkt_milp(model, samples, obs, cfg);
    case RecoveryEngine::Both:
      break;
  }
  RecoveryReport bis = recover_bisection(model, samples, obs, cfg);
  const RecoveryReport milp = recover_kkt_milp(model, samples, obs, cfg);
  bis.engine = "both";
  bis.per_engine = std::make_pair(bis.epsilon_star, milp.epsilon_star);
  bis.iterations += milp.iterations;
  return bis;
}

DataDrivenResult recover_data_driven(const CcLinearProgram& model,
                                     const std::vector<SampleSet>& sample_windows,
                                     const std::vector<Observation>& observations,
                                     const RecoveryConfig& cfg) {
  if (sample_windows.empty() || observations.empty()) {
    throw std::invalid_argument("recover_data_driven: empty input");
  }
  if (sample_windows.size() != observations.size()) {
    throw std::invalid_argument(
        "recover_data_driven: one sample window per observation required");
  }

  const size_t periods = sample_windows.size();
  std::vector<std::future<RecoveryReport>> futures;
  futures.reserve(periods);
  for (size_t t = 0; t < periods; ++t) {
    futures.push_back(std::async(std::launch::async, [&, t] {
      return recover(model, sample_windows[t], observations[t], cfg);
    }));
  }

  DataDrivenResult out;
  out.per_period.reserve(periods);
  for (auto& f : futures) out.per_period.push_back(f.get());

  double best = kInfinity;
  double spread_lo = kInfinity, spread_hi = -kInfinity;
  int non_failed = 0;
  for (const auto& r : out.per_period) {
    if (r.failed) continue;
    ++non_failed;
    best = std::min(best, r.epsilon_star);
    spread_lo = std::min(spread_lo, r.epsilon_star);
    spread_hi = std::max(spread_hi, r.epsilon_star);
  }

  out.final.engine = "data-driven";
  for (const auto& r : out.per_period) out.final.iterations += r.iterations;
  if (non_failed == 0) {
    out.final.epsilon_star = cfg.epsilon_bar;
    out.final.failed = true;
    out.final.binding_at_star = out.per_period.front().binding_at_star;
  } else {
    out.final.epsilon_star = best;
    out.final.failed = false;
    out.variation = non_failed > 1 && (spread_hi - spread_lo) > 10.0 * cfg.bisection_tol;
    for (const auto& r : out.per_period) {
      if (!r.failed && r.epsilon_star == best) {
        out.final.binding_at_star = r.binding_at_star;
        break;
      }
    }
  }
  return out;
}

RecoveryReport recover_relaxed(const CcLinearProgram& model, const SampleSet& samples,
                               const Observation& obs, const RecoveryConfig& cfg,
                               double noise_weight) {
  guard_config(model, samples, obs, cfg);
  RecoveryReport report;
  report.engine = "relaxed";

  FeasibilityOracle oracle(model, samples, obs.x0, cfg.forward.solver);
  EngineContext ctx{model, samples, obs, cfg, model.cost.dot(obs.x0), &report.trace,
                    &report.iterations, &oracle};

  if (assemble(model, samples, 0.0).layout.num_rows() > cfg.milp_pair_limit) {
    throw ConfigError("instance too large for the relaxed engine");
  }

  // Domain of the search: radii where the observation stays feasible.
  double top = cfg.epsilon_bar;
  if (!kkt_primal_feasible(ctx, cfg.epsilon_bar)) {
    if (!kkt_primal_feasible(ctx, 0.0)) {
      throw ObservationNotRationalizable(
          "observation is infeasible for the restriction at every radius");
    }
    const auto [lo, hi] = bisect_boundary(
        cfg.epsilon_bar, cfg.bisection_tol, std::nullopt,
        [&](double eps) { return kkt_primal_feasible(ctx, eps); });
    (void)hi;
    top = lo;
  }

  // Minimum total slack of the relaxed first-order system at one radius.
  // Stationarity gets one slack per condition; the complementarity block is
  // summarized by the duality-gap slack, which equals the sum of the
  // pairwise products whenever stationarity holds, so no products (and no
  // binaries) are needed to score a noisy observation.
  const auto slack_at = [&](double eps) {
    const FdroInstance inst = assemble(ctx.model, ctx.samples, eps);
    const LpSolution sol =
        solve_lp(relaxed_slack_lp(inst, ctx.obs.x0), cfg.forward.solver);
    return sol.status == LpStatus::Optimal ? sol.objective_value : kInfinity;
  };
  const auto score = [&](double eps) {
    ++report.iterations;
    return (cfg.epsilon_bar - eps) + noise_weight * slack_at(eps);
  };

  // Coarse grid plus golden-section refinement around the best cell.
  constexpr int kGrid = 16;
  double best_eps = 0.0;
  double best_score = kInfinity;
  std::vector<double> grid_scores(kGrid + 1);
  for (int g = 0; g <= kGrid; ++g) {
    const double eps = top * g / kGrid;
    grid_scores[static_cast<size_t>(g)] = score(eps);
    if (grid_scores[static_cast<size_t>(g)] <= best_score) {  // ties take larger radius
      best_score = grid_scores[static_cast<size_t>(g)];
      best_eps = eps;
    }
  }
  double a = std::max(0.0, best_eps - top / kGrid);
  double b = std::min(top, best_eps + top / kGrid);
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - golden * (b - a);
  double x2 = a + golden * (b - a);
  double f1 = score(x1);
  double f2 = score(x2);
  while (b - a > cfg.bisection_tol) {
    if (f1 > f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + golden * (b - a);
      f2 = score(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - golden * (b - a);
      f1 = score(x1);
    }
  }
  const double refined = 0.5 * (a + b);
  const double refined_score = score(refined);
  if (refined_score <= best_score) {
    best_eps = refined;
    best_score = refined_score;
  }

  report.epsilon_star = best_eps;
  report.total_slack = slack_at(best_eps);
  report.failed = cfg.epsilon_bar - best_eps <= 10.0 * cfg.bisection_tol;
  report.binding_at_star = binding_at(model, samples, best_eps, cfg);
  return report;
}

Diagnosis diagnose(const RecoveryReport& report, const SampleSet& samples) {
  Diagnosis d;
  if (!report.failed) {
    d.nominal = true;
    return d;
  }
  d.nominal = false;
  const double cap = epsilon_max(samples);
  d.candidates.push_back(
      {FailureScenario::UnsuitableEpsilon,
       "the decision is consistent with every radius at or above the critical "
       "radius " +
           std::to_string(cap) +
           "; a decision-maker relying only on the support bounds looks identical"});
  if (!report.binding_at_star) {
    d.candidates.push_back(
        {FailureScenario::ChanceConstraintNotBinding,
         "the risk row is slack at the recovered radius, so the radius never "
         "priced into the decision"});
  }
  const Index n_s = samples.num_samples();
  if (n_s < 20) {
    d.candidates.push_back(
        {FailureScenario::SamplesNotRepresentative,
         "only " + std::to_string(n_s) +
             " samples are available; the empirical tail is too coarse to pin "
             "the risk level"});
  }
  return d;
}

std::string to_json(const RecoveryReport& report) {
  using nlohmann::json;
  json j;
  j["epsilon_star"] = report.epsilon_star;
  j["failed"] = report.failed;
  j["engine"] = report.engine;
  j["iterations"] = report.iterations;
  j["binding_at_star"] = report.binding_at_star;
  j["total_slack"] = report.total_slack;
  if (report.per_engine) {
    j["per_engine"] = {{"bisection", report.per_engine->first},
                       {"kkt_milp", report.per_engine->second}};
  }
  json trace = json::array();
  for (const auto& t : report.trace) {
    const char* verdict = nullptr;
    switch (t.verdict) {
      case TraceVerdict::Feasible: verdict = "feasible"; break;
      case TraceVerdict::Infeasible: verdict = "infeasible"; break;
      case TraceVerdict::Optimal: verdict = "optimal"; break;
      case TraceVerdict::NotOptimal: verdict = "not_optimal"; break;
    }
    trace.push_back({{"epsilon", t.epsilon}, {"verdict", verdict}});
  }
  j["trace"] = std::move(trace);
  return j.dump(2);
}

void save_recovery_report(const RecoveryReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(report) << "\n";
}

}  // namespace idro
