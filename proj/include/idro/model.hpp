#pragma once

#include <optional>
#include <string>
#include <vector>

#include "idro/types.hpp"

namespace idro {

/// Chance-constrained linear program
///   min  c'x
///   s.t. A x <= h                               (ordinary rows)
///        inf_P Pr{ B x + D xi <= d } >= 1-gamma (joint chance constraint)
///        lb <= x <= ub                          (optional box)
/// Dense storage; instances are desk scale.
struct CcLinearProgram {
  Vector cost;   // c, length n
  Matrix a;      // N_oc x n
  Vector h;      // N_oc
  Matrix b;      // N_cc x n
  Matrix d_mat;  // N_cc x m
  Vector d;      // N_cc
  double gamma = 0.0;
  std::optional<Vector> variable_lower;
  std::optional<Vector> variable_upper;

  Index num_vars() const { return cost.size(); }
  Index num_ordinary() const { return h.size(); }
  Index num_chance() const { return d.size(); }
  Index uncertainty_dim() const { return d_mat.cols(); }
};

/// An observed decision paired with an optional label (period, hour, ...).
struct Observation {
  Vector x0;
  std::optional<std::string> timestamp;
};

struct Diagnostic {
  std::string field;
  std::string message;
};

/// Total validation: returns one diagnostic per violated invariant and
/// never throws, even on NaN/Inf entries. Empty result means well-formed.
std::vector<Diagnostic> validate(const CcLinearProgram& model);

/// Throwing convenience wrapper used by operations that require a valid
/// model; the exception message aggregates all diagnostics.
void require_valid(const CcLinearProgram& model);

/// JSON round-trip: {"c": [...], "A": [[...]], "h": [...], "B": [[...]],
/// "D": [[...]], "d": [...], "gamma": g, "lb": [...], "ub": [...]}.
std::string to_json(const CcLinearProgram& model);
CcLinearProgram model_from_json(const std::string& text);
void save_model(const CcLinearProgram& model, const std::string& path);
CcLinearProgram load_model(const std::string& path);

}  // namespace idro
