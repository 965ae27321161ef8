#pragma once

#include <string>
#include <utility>
#include <vector>

#include "idro/ambiguity.hpp"
#include "idro/model.hpp"
#include "idro/solver.hpp"

namespace idro {

/// Zonal DC power system with line-flow uncertainty. PTDF maps bus
/// injections to line flows; gen_bus_map places each generator at exactly
/// one bus.
struct PowerSystem {
  std::string name;
  Matrix ptdf;         // N_l x N_b
  Matrix gen_bus_map;  // N_b x N_g, 0/1
  Vector cost;         // $/MWh per generator
  Vector x_min;        // MW (or per unit) per generator
  Vector x_max;
  Vector f_max;     // per line
  Vector net_load;  // per bus
  double gamma = 0.05;
  double reserve_fraction = 0.05;

  Index num_buses() const { return ptdf.cols(); }
  Index num_lines() const { return ptdf.rows(); }
  Index num_generators() const { return gen_bus_map.cols(); }
  double total_load() const { return net_load.sum(); }

  void validate() const;  // throws with field-level diagnostics
};

struct DcopfDecision {
  Vector dispatch;  // x
  Vector reserve;   // r
};

/// Index legend of the chance-constrained mapping: decision z = [x; r],
/// ordinary rows in the listed order, chance rows as the +/- flow pair.
struct DcopfMapping {
  CcLinearProgram model;
  Index n_gen = 0;
  Index dispatch_begin = 0;  // x block in z
  Index reserve_begin = 0;   // r block in z
  Index row_balance_le = 0;  // 1'x <= total load
  Index row_balance_ge = 0;  // -1'x <= -total load
  Index row_capacity_upper = 0;  // x + r <= x_max, one per generator
  Index row_capacity_lower = 0;  // -x - r <= -x_min
  Index row_reserve = 0;         // -1'r <= -R
  Index row_dispatch_sign = 0;   // -x <= 0
  Index row_reserve_sign = 0;    // -r <= 0
  Index chance_flow_upper = 0;   // -Phi(Sx-e) - df <= f_max rows
  Index chance_flow_lower = 0;   //  Phi(Sx-e) - df <= f_max rows

  DcopfDecision split(const Vector& z) const {
    return {z.segment(dispatch_begin, n_gen), z.segment(reserve_begin, n_gen)};
  }
};

/// Maps the system into the abstract chance-constrained program. The random
/// vector is the flow-limit perturbation (one coordinate per line); the
/// reserve requirement is reserve_fraction times total net load.
DcopfMapping to_cc_lp(const PowerSystem& sys);

/// Coordinate-wise uniform flow-limit perturbations on +-0.1 f_max, with
/// the support box set to exactly that interval. Deterministic per seed and
/// platform (the generator draws 53-bit mantissas directly).
SampleSet generate_samples(const PowerSystem& sys, Index n_samples,
                           unsigned long long seed);

/// Deterministic DC-OPF (no uncertainty, hard flow limits) as a plain LP.
/// Used as the independent sanity oracle for the zero-radius forward solve.
StandardLp deterministic_dcopf_lp(const PowerSystem& sys);

/// PTDF from branch reactances via the injection-shift construction with
/// the given slack bus (flows of a unit injection withdrawn at the slack).
Matrix ptdf_from_reactances(const std::vector<std::pair<Index, Index>>& branches,
                            const Vector& reactance, Index n_bus, Index slack_bus);

PowerSystem system_from_json(const std::string& text);
PowerSystem load_system(const std::string& path);

}  // namespace idro
