#include "idro/forward.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace idro {

namespace {

// Single source of truth for the assembled row coefficients. Emits every
// structural coefficient and right-hand side through the callbacks so the
// full LP, the restriction LP, and the KKT blocks cannot drift apart.
template <typename EmitCoef, typename EmitRhs>
void generate_rows(const FdroInstance& inst, EmitCoef&& coef, EmitRhs&& rhs) {
  const FdroLayout& lay = inst.layout;
  const CcLinearProgram& mdl = inst.model;
  const double gamma = mdl.gamma;
  const double inv_m = 1.0 / static_cast<double>(lay.m);

  // Ordinary rows (model rows plus folded box bounds).
  for (Index r = 0; r < lay.n_ordinary; ++r) {
    for (Index j = 0; j < lay.n; ++j) {
      const double v = inst.ordinary_matrix(r, j);
      if (v != 0.0) coef(r, j, v);
    }
    rhs(r, inst.ordinary_rhs[r]);
  }

  // CVaR row: tau + (eps/gamma) sum_j lambda_j + 1/(gamma N_s) sum_ij s_ij <= 0.
  {
    const Index r = lay.cvar_row();
    coef(r, lay.tau(), 1.0);
    if (inst.epsilon != 0.0) {
      for (Index j = 0; j < lay.m; ++j) coef(r, lay.lambda_slot(j), inst.epsilon / gamma);
    }
    const double sw = 1.0 / (gamma * static_cast<double>(lay.n_samples));
    for (Index i = 0; i < lay.n_samples; ++i) {
      for (Index j = 0; j < lay.m; ++j) coef(r, lay.s_slot(i, j), sw);
    }
    rhs(r, 0.0);
  }

  // Three families of epigraph cuts. For k >= 1 the scaled shortfall
  // b_k = (B_{k-1} x - d_{k-1} - tau)/m enters each row; k = 0 rows carry
  // only the slack (and lambda for the corner families).
  for (int family = 0; family < 3; ++family) {
    for (Index i = 0; i < lay.n_samples; ++i) {
      for (Index k = 0; k <= lay.n_cc; ++k) {
        for (Index j = 0; j < lay.m; ++j) {
          const Index r = lay.family_row(family, i, k, j);
          coef(r, lay.s_slot(i, j), -1.0);
          double point;   // evaluation point of coordinate j
          double relief;  // lambda_j coefficient (distance to the sample)
          if (family == 0) {
            point = inst.samples.samples(i, j);
            relief = 0.0;
          } else if (family == 1) {
            point = inst.samples.upper_bound[j];
            relief = inst.dist_upper(i, j);
          } else {
            point = inst.samples.lower_bound[j];
            relief = inst.dist_lower(i, j);
          }
          if (relief != 0.0) coef(r, lay.lambda_slot(j), -relief);
          if (k == 0) {
            rhs(r, 0.0);
            continue;
          }
          const Index row_k = k - 1;
          for (Index v = 0; v < lay.n; ++v) {
            const double bv = mdl.b(row_k, v);
            if (bv != 0.0) coef(r, v, bv * inv_m);
          }
          coef(r, lay.tau(), -inv_m);
          rhs(r, mdl.d[row_k] * inv_m - mdl.d_mat(row_k, j) * point);
        }
      }
    }
  }

  // lambda_j >= 0 as explicit rows so the eta duals are first class.
  for (Index j = 0; j < lay.m; ++j) {
    const Index r = lay.lambda_row(j);
    coef(r, lay.lambda_slot(j), -1.0);
    rhs(r, 0.0);
  }
}

Vector full_objective(const FdroInstance& inst) {
  Vector c = Vector::Zero(inst.layout.num_vars());
  c.head(inst.layout.n) = inst.model.cost;
  return c;
}

double cvar_row_scale(const FdroInstance& inst) {
  const double gamma = inst.model.gamma;
  double maxabs = 1.0;  // tau coefficient
  maxabs = std::max(maxabs, inst.epsilon / gamma);
  maxabs = std::max(maxabs, 1.0 / (gamma * static_cast<double>(inst.layout.n_samples)));
  return 1.0 / maxabs;
}

nlohmann::json vec_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

double KktResiduals::max_abs() const {
  double v = 0.0;
  for (const double b :
       {stationarity_x, stationarity_tau, stationarity_lambda, stationarity_s,
        comp_ordinary, comp_cvar, comp_family_sample, comp_family_upper,
        comp_family_lower, comp_lambda_sign, primal_feasibility, dual_feasibility}) {
    v = std::max(v, b);
  }
  return v;
}

FdroInstance assemble(const CcLinearProgram& model, const SampleSet& samples,
                      double epsilon) {
  require_valid(model);
  samples.validate();
  if (samples.dimension() != model.uncertainty_dim()) {
    throw std::invalid_argument("assemble: sample dimension " +
                                std::to_string(samples.dimension()) +
                                " does not match model uncertainty dimension " +
                                std::to_string(model.uncertainty_dim()));
  }
  if (epsilon < 0.0) throw std::invalid_argument("assemble: negative radius");

  FdroInstance inst;
  inst.model = model;
  inst.samples = samples;
  inst.epsilon = epsilon;

  // Fold optional box bounds into the ordinary block so the assembled rows
  // keep the plain inequality shape.
  const Index n = model.num_vars();
  Index extra = 0;
  if (model.variable_lower) {
    for (Index j = 0; j < n; ++j) extra += std::isfinite((*model.variable_lower)[j]);
  }
  if (model.variable_upper) {
    for (Index j = 0; j < n; ++j) extra += std::isfinite((*model.variable_upper)[j]);
  }
  inst.ordinary_matrix = Matrix::Zero(model.num_ordinary() + extra, n);
  inst.ordinary_rhs = Vector::Zero(model.num_ordinary() + extra);
  inst.ordinary_matrix.topRows(model.num_ordinary()) = model.a;
  inst.ordinary_rhs.head(model.num_ordinary()) = model.h;
  Index r = model.num_ordinary();
  if (model.variable_lower) {
    for (Index j = 0; j < n; ++j) {
      if (!std::isfinite((*model.variable_lower)[j])) continue;
      inst.ordinary_matrix(r, j) = -1.0;
      inst.ordinary_rhs[r] = -(*model.variable_lower)[j];
      ++r;
    }
  }
  if (model.variable_upper) {
    for (Index j = 0; j < n; ++j) {
      if (!std::isfinite((*model.variable_upper)[j])) continue;
      inst.ordinary_matrix(r, j) = 1.0;
      inst.ordinary_rhs[r] = (*model.variable_upper)[j];
      ++r;
    }
  }

  inst.layout.n = n;
  inst.layout.m = model.uncertainty_dim();
  inst.layout.n_samples = samples.num_samples();
  inst.layout.n_cc = model.num_chance();
  inst.layout.n_ordinary = inst.ordinary_matrix.rows();

  inst.dist_upper.resize(samples.num_samples(), samples.dimension());
  inst.dist_lower.resize(samples.num_samples(), samples.dimension());
  for (Index i = 0; i < samples.num_samples(); ++i) {
    for (Index j = 0; j < samples.dimension(); ++j) {
      inst.dist_upper(i, j) = std::abs(samples.upper_bound[j] - samples.samples(i, j));
      inst.dist_lower(i, j) = std::abs(samples.lower_bound[j] - samples.samples(i, j));
    }
  }
  return inst;
}

static StandardLp to_standardlp_impl(const FdroInstance& inst, const Vector* x0) {
  const FdroLayout& lay = inst.layout;
  const bool restricted = x0 != nullptr;
  const Index n_cols = restricted ? lay.num_vars() - lay.n : lay.num_vars();

  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(lay.num_rows()) * 8);
  Vector rhs = Vector::Zero(lay.num_rows());

  generate_rows(
      inst,
      [&](Index r, Index c, double v) {
        if (!restricted) {
          trips.emplace_back(r, c, v);
        } else if (c >= lay.n) {
          trips.emplace_back(r, c - lay.n, v);
        } else {
          rhs[r] -= v * (*x0)[c];
        }
      },
      [&](Index r, double v) { rhs[r] += v; });

  StandardLp lp;
  lp.objective = Vector::Zero(n_cols);
  if (!restricted) lp.objective.head(lay.n) = inst.model.cost;
  lp.ineq_matrix.resize(lay.num_rows(), n_cols);
  lp.ineq_matrix.setFromTriplets(trips.begin(), trips.end());
  lp.ineq_rhs = rhs;
  lp.eq_matrix.resize(0, n_cols);
  lp.eq_rhs = Vector(0);
  lp.lower = Vector::Constant(n_cols, -kInfinity);
  lp.upper = Vector::Constant(n_cols, kInfinity);
  return lp;
}

StandardLp to_standard_lp(const FdroInstance& inst) {
  return to_standardlp_impl(inst, nullptr);
}

StandardLp restriction_lp(const FdroInstance& inst, const Vector& x0) {
  if (x0.size() != inst.layout.n) {
    throw std::invalid_argument("restriction_lp: observation length mismatch");
  }
  return to_standardlp_impl(inst, &x0);
}

ForwardSolution solve_forward(const FdroInstance& inst, const ForwardOptions& opts) {
  const StandardLp lp = to_standard_lp(inst);
  const LpSolution sol = solve_lp(lp, opts.solver);
  if (sol.status == LpStatus::Infeasible) {
    throw SolverError("forward program infeasible: model and radius are inconsistent");
  }
  if (sol.status == LpStatus::Unbounded) {
    throw SolverError("forward program unbounded: the model is missing bounds");
  }

  const FdroLayout& lay = inst.layout;
  ForwardSolution out;
  out.instance = inst;
  out.x_opt = sol.primal.head(lay.n);
  out.tau = sol.primal[lay.tau()];
  out.lambda = sol.primal.segment(lay.n + 1, lay.m);
  out.s.resize(lay.n_samples, lay.m);
  for (Index i = 0; i < lay.n_samples; ++i) {
    for (Index j = 0; j < lay.m; ++j) out.s(i, j) = sol.primal[lay.s_slot(i, j)];
  }
  out.point.primal = sol.primal;
  out.point.dual = sol.dual_ineq;
  out.point.epsilon = inst.epsilon;
  out.objective = inst.model.cost.dot(out.x_opt);

  if (opts.classify_binding) {
    // Maximal slack of the CVaR row over the auxiliaries that keep x_opt
    // optimal (the auxiliaries never enter the cost, so this is the
    // restriction at x_opt with the row expression as objective).
    out.cvar_slack = -min_cvar_row(inst, out.x_opt, opts.solver).value;
  } else {
    const double activity = out.tau +
                            inst.epsilon / inst.model.gamma * out.lambda.sum() +
                            out.s.sum() / (inst.model.gamma * lay.n_samples);
    out.cvar_slack = -activity;
  }
  out.cvar_binding = std::abs(out.cvar_slack) * cvar_row_scale(inst) <= opts.binding_tol;
  return out;
}

KktResiduals kkt_residuals(const FdroInstance& inst, const KktPoint& point) {
  const FdroLayout& lay = inst.layout;
  if (point.primal.size() != lay.num_vars() || point.dual.size() != lay.num_rows()) {
    throw std::invalid_argument("kkt_residuals: point does not match the layout");
  }

  // Row activities and the stationarity gradient in one sweep.
  Vector activity = Vector::Zero(lay.num_rows());
  Vector rhs = Vector::Zero(lay.num_rows());
  Vector grad = full_objective(inst);
  generate_rows(
      inst,
      [&](Index r, Index c, double v) {
        activity[r] += v * point.primal[c];
        grad[c] += v * point.dual[r];
      },
      [&](Index r, double v) { rhs[r] += v; });

  KktResiduals res;
  res.stationarity_x = lay.n > 0 ? grad.head(lay.n).cwiseAbs().maxCoeff() : 0.0;
  res.stationarity_tau = std::abs(grad[lay.tau()]);
  res.stationarity_lambda = grad.segment(lay.n + 1, lay.m).cwiseAbs().maxCoeff();
  res.stationarity_s = grad.tail(lay.n_samples * lay.m).cwiseAbs().maxCoeff();

  const auto comp_block = [&](Index begin, Index end) {
    double worst = 0.0;
    for (Index r = begin; r < end; ++r) {
      worst = std::max(worst, std::abs(point.dual[r] * (rhs[r] - activity[r])));
    }
    return worst;
  };
  res.comp_ordinary = comp_block(0, lay.n_ordinary);
  res.comp_cvar = comp_block(lay.cvar_row(), lay.cvar_row() + 1);
  const Index f0 = lay.family_row(0, 0, 0, 0);
  res.comp_family_sample = comp_block(f0, f0 + lay.family_size());
  res.comp_family_upper = comp_block(f0 + lay.family_size(), f0 + 2 * lay.family_size());
  res.comp_family_lower =
      comp_block(f0 + 2 * lay.family_size(), f0 + 3 * lay.family_size());
  res.comp_lambda_sign = comp_block(lay.lambda_row(0), lay.num_rows());

  res.primal_feasibility = (activity - rhs).cwiseMax(0.0).maxCoeff();
  res.dual_feasibility = (-point.dual).cwiseMax(0.0).maxCoeff();
  return res;
}

CvarFloor min_cvar_row(const FdroInstance& inst, const Vector& x0,
                       const SolverConfig& cfg) {
  const FdroLayout& lay = inst.layout;
  StandardLp lp = restriction_lp(inst, x0);
  // Lift the row out of the constraint set so the minimum is defined even
  // when the restriction is infeasible.
  lp.ineq_rhs[lay.cvar_row()] = 1e30;
  const Index m = lay.m;
  lp.objective[0] = 1.0;  // tau occupies the first restricted slot
  for (Index j = 0; j < m; ++j) {
    lp.objective[1 + j] = inst.epsilon / inst.model.gamma;
  }
  const double sw = 1.0 / (inst.model.gamma * static_cast<double>(lay.n_samples));
  for (Index i = 0; i < lay.n_samples; ++i) {
    for (Index j = 0; j < m; ++j) lp.objective[1 + m + i * m + j] = sw;
  }
  const LpSolution sol = solve_lp(lp, cfg);
  CvarFloor out;
  if (sol.status == LpStatus::Infeasible) {
    // The decision violates rows the auxiliaries cannot influence; no
    // radius makes the restriction feasible.
    out.value = kInfinity;
    return out;
  }
  if (sol.status != LpStatus::Optimal) {
    throw SolverError("risk-row floor LP did not solve to optimality");
  }
  out.value = sol.objective_value;
  out.lambda_sum = sol.primal.segment(1, m).sum();
  return out;
}

ObservationCertificate is_observation_optimal(const CcLinearProgram& model,
                                              const SampleSet& samples, double epsilon,
                                              const Observation& obs,
                                              const ForwardOptions& opts) {
  const FdroInstance inst = assemble(model, samples, epsilon);
  ObservationCertificate cert;
  cert.observed_cost = model.cost.dot(obs.x0);

  const StandardLp restriction = restriction_lp(inst, obs.x0);
  const LpSolution rsol = solve_lp(restriction, opts.solver);
  if (rsol.status != LpStatus::Optimal) {
    cert.status = ObservationStatus::Infeasible;
    return cert;
  }

  const ForwardSolution fwd = solve_forward(inst, opts);
  cert.forward_objective = fwd.objective;
  cert.gap = cert.observed_cost - fwd.objective;
  // Optimality is judged on objective values, never on decision vectors:
  // the optimum may be non-unique.
  const double tol = 1e-7 * (1.0 + std::abs(fwd.objective));
  cert.status =
      cert.gap <= tol ? ObservationStatus::Optimal : ObservationStatus::FeasibleOnly;
  return cert;
}

std::string to_json(const ForwardSolution& sol) {
  using nlohmann::json;
  const FdroLayout& lay = sol.instance.layout;
  json j;
  j["epsilon"] = sol.instance.epsilon;
  j["objective"] = sol.objective;
  j["x"] = vec_json(sol.x_opt);
  j["tau"] = sol.tau;
  j["lambda"] = vec_json(sol.lambda);
  json s_rows = json::array();
  for (Index i = 0; i < lay.n_samples; ++i) {
    s_rows.push_back(vec_json(sol.s.row(i).transpose()));
  }
  j["s"] = std::move(s_rows);
  j["cvar_binding"] = sol.cvar_binding;
  j["cvar_slack"] = sol.cvar_slack;

  json duals;
  duals["theta"] = vec_json(sol.point.dual.head(lay.n_ordinary));
  duals["mu"] = sol.point.dual[lay.cvar_row()];
  const auto family_json = [&](int f) {
    json families = json::array();
    for (Index i = 0; i < lay.n_samples; ++i) {
      json per_k = json::array();
      for (Index k = 0; k <= lay.n_cc; ++k) {
        json per_j = json::array();
        for (Index j2 = 0; j2 < lay.m; ++j2) {
          per_j.push_back(sol.point.dual[lay.family_row(f, i, k, j2)]);
        }
        per_k.push_back(std::move(per_j));
      }
      families.push_back(std::move(per_k));
    }
    return families;
  };
  duals["phi1"] = family_json(0);
  duals["phi2"] = family_json(1);
  duals["phi3"] = family_json(2);
  json eta = json::array();
  for (Index j2 = 0; j2 < lay.m; ++j2) eta.push_back(sol.point.dual[lay.lambda_row(j2)]);
  duals["eta"] = std::move(eta);
  j["duals"] = std::move(duals);
  return j.dump(2);
}

void save_forward_solution(const ForwardSolution& sol, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(sol) << "\n";
}

}  // namespace idro
