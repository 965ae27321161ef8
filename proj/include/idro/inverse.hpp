#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "idro/forward.hpp"

namespace idro {

enum class RecoveryEngine { Bisection, KktMilp, Both };

/// Knobs of the recovery engines. epsilon_bar is validated against the
/// critical radius of the samples at run time; results equal to it signal
/// a recovery failure rather than a usable radius.
struct RecoveryConfig {
  double epsilon_bar = 100.0;
  double bisection_tol = 1e-6;  // absolute on the radius
  RecoveryEngine engine = RecoveryEngine::Bisection;
  double big_m_scale = 10.0;      // multiplier on observed dual/slack bounds
  double certification_tol = 1e-3;  // KKT slack budget accepted at the boundary
  long milp_pair_limit = 400;     // complementarity pairs the MILP engine accepts
  ForwardOptions forward;
};

enum class TraceVerdict { Feasible, Infeasible, Optimal, NotOptimal };

struct TraceEntry {
  double epsilon = 0.0;
  TraceVerdict verdict = TraceVerdict::Infeasible;
};

struct RecoveryReport {
  double epsilon_star = 0.0;
  bool failed = false;  // epsilon_star == epsilon_bar: indicator, not a value
  std::string engine;
  int iterations = 0;
  std::optional<std::pair<double, double>> per_engine;  // (bisection, kkt-milp)
  bool binding_at_star = false;
  std::vector<TraceEntry> trace;
  double total_slack = 0.0;  // nonzero only for the relaxed engine
};

/// The observation is not optimal for any radius in [0, epsilon_bar].
class ObservationNotRationalizable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finds the largest radius at which the observation remains optimal. The
/// candidate set is located by bisection on restriction feasibility (a
/// down-closed predicate) and the boundary is certified by comparing the
/// observed cost against the forward optimum there.
RecoveryReport recover_bisection(const CcLinearProgram& model, const SampleSet& samples,
                                 const Observation& obs, const RecoveryConfig& cfg = {});

/// Independent engine: certifies the boundary through the first-order
/// system itself. Complementarity is encoded pairwise with one binary and
/// big-M bounds, a strong-duality cut tightens the relaxation, and the
/// radius is maximized by a parametric outer search (the products of the
/// radius with the dual of the risk row and with the transport multipliers
/// make the one-shot program bilinear, so the scalar is swept instead).
RecoveryReport recover_kkt_milp(const CcLinearProgram& model, const SampleSet& samples,
                                const Observation& obs, const RecoveryConfig& cfg = {});

/// Dispatch on cfg.engine; with Both, runs the two engines and reports the
/// bisection value plus the per-engine pair.
RecoveryReport recover(const CcLinearProgram& model, const SampleSet& samples,
                       const Observation& obs, const RecoveryConfig& cfg = {});

struct DataDrivenResult {
  RecoveryReport final;
  std::vector<RecoveryReport> per_period;
  bool variation = false;  // per-period estimates disagree beyond tolerance
};

/// Multi-observation recovery: one run per period, final radius is the
/// smallest non-failed estimate. Periods run in parallel.
DataDrivenResult recover_data_driven(const CcLinearProgram& model,
                                     const std::vector<SampleSet>& sample_windows,
                                     const std::vector<Observation>& observations,
                                     const RecoveryConfig& cfg = {});

/// Noisy-observation variant: every first-order condition gets a slack
/// variable and the objective trades radius against total slack magnitude
/// with the given weight. Reduces to recover_kkt_milp as the weight grows
/// and the observation is exact.
RecoveryReport recover_relaxed(const CcLinearProgram& model, const SampleSet& samples,
                               const Observation& obs, const RecoveryConfig& cfg,
                               double noise_weight = 1e3);

enum class FailureScenario {
  UnsuitableEpsilon,
  ChanceConstraintNotBinding,
  SamplesNotRepresentative,
};

struct DiagnosisEntry {
  FailureScenario scenario;
  std::string evidence;
};

struct Diagnosis {
  bool nominal = true;
  std::vector<DiagnosisEntry> candidates;
};

/// For a failed recovery, lists the candidate explanations the data side
/// can actually support with evidence (critical radius, binding status,
/// sample count). Does not pretend to single one out.
Diagnosis diagnose(const RecoveryReport& report, const SampleSet& samples);

std::string to_json(const RecoveryReport& report);
void save_recovery_report(const RecoveryReport& report, const std::string& path);

}  // namespace idro
