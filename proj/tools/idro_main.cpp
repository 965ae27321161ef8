// Command-line front end: forward solves, radius recovery, batch
// experiments, critical-radius reports and sample generation.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "idro/experiment.hpp"

namespace {

using namespace idro;

constexpr int kExitError = 1;
constexpr int kExitFailureIndicator = 2;
constexpr int kExitNotRationalizable = 3;

struct GlobalOptions {
  double tol = 1e-6;
  double eps_bar = 100.0;
  std::string engine = "bisection";
  int jobs = 0;
  unsigned long long seed = 7;
};

RecoveryConfig make_recovery_config(const GlobalOptions& g) {
  RecoveryConfig cfg;
  cfg.bisection_tol = g.tol;
  cfg.epsilon_bar = g.eps_bar;
  if (g.engine == "bisection") {
    cfg.engine = RecoveryEngine::Bisection;
  } else if (g.engine == "milp") {
    cfg.engine = RecoveryEngine::KktMilp;
  } else if (g.engine == "both") {
    cfg.engine = RecoveryEngine::Both;
  } else {
    throw CLI::ValidationError("--engine must be bisection, milp or both");
  }
  return cfg;
}

struct ProblemInputs {
  CcLinearProgram model;
  SampleSet samples;
  std::optional<PowerSystem> system;
};

/// Resolves --system/--model plus --samples/--gen into a ready problem.
ProblemInputs load_inputs(const std::string& system_path, const std::string& model_path,
                          const std::string& samples_path, Index gen_count,
                          unsigned long long seed) {
  ProblemInputs in;
  if (!system_path.empty()) {
    in.system = load_system(system_path);
    in.model = to_cc_lp(*in.system).model;
  } else if (!model_path.empty()) {
    in.model = load_model(model_path);
    require_valid(in.model);
  } else {
    throw std::runtime_error("provide --system or --model");
  }
  if (!samples_path.empty()) {
    in.samples = load_sample_set(samples_path);
  } else if (gen_count > 0) {
    if (!in.system) {
      throw std::runtime_error("--gen needs --system (bounds come from line limits)");
    }
    in.samples = generate_samples(*in.system, gen_count, seed);
  } else {
    throw std::runtime_error("provide --samples or --gen");
  }
  return in;
}

Vector observation_from_file(const std::string& path, Index expected) {
  std::ifstream inp(path);
  if (!inp) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(inp);
  const auto& arr = j.contains("x0") ? j["x0"] : j.at("x");
  Vector x(static_cast<Index>(arr.size()));
  Index i = 0;
  for (const auto& v : arr) x[i++] = v.get<double>();
  if (x.size() != expected) {
    throw std::runtime_error("observation has " + std::to_string(x.size()) +
                             " entries, the model expects " + std::to_string(expected));
  }
  return x;
}

int cmd_forward(const GlobalOptions& g, const std::string& system_path,
                const std::string& model_path, const std::string& samples_path,
                Index gen_count, double eps, const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemInputs in =
      load_inputs(system_path, model_path, samples_path, gen_count, g.seed);
  const ForwardSolution sol = solve_forward(assemble(in.model, in.samples, eps));
  const double dt =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out_path.empty()) save_forward_solution(sol, out_path);
  std::printf("objective      %.10g\n", sol.objective);
  std::printf("cvar_binding   %s\n", sol.cvar_binding ? "true" : "false");
  std::printf("cvar_slack     %.3e\n", sol.cvar_slack);
  std::printf("solve_time_s   %.2f\n", dt);
  return 0;
}

int cmd_inverse(const GlobalOptions& g, const std::string& system_path,
                const std::string& model_path, const std::string& samples_path,
                Index gen_count, const std::string& obs_path,
                const std::string& out_path) {
  const ProblemInputs in =
      load_inputs(system_path, model_path, samples_path, gen_count, g.seed);
  const Observation obs{observation_from_file(obs_path, in.model.num_vars()), {}};
  const RecoveryConfig cfg = make_recovery_config(g);
  RecoveryReport rep;
  try {
    rep = recover(in.model, in.samples, obs, cfg);
  } catch (const ObservationNotRationalizable& e) {
    std::fprintf(stderr, "not rationalizable: %s\n", e.what());
    return kExitNotRationalizable;
  }
  if (!out_path.empty()) save_recovery_report(rep, out_path);
  std::printf("epsilon_star   %.10g\n", rep.epsilon_star);
  std::printf("failed         %s\n", rep.failed ? "true" : "false");
  if (rep.per_engine) {
    std::printf("per_engine     bisection=%.10g kkt_milp=%.10g\n",
                rep.per_engine->first, rep.per_engine->second);
  }
  std::printf("iterations     %d\n", rep.iterations);
  if (rep.failed) {
    const Diagnosis d = diagnose(rep, in.samples);
    for (const auto& c : d.candidates) {
      std::printf("scenario       %s\n", c.evidence.c_str());
    }
  }
  return rep.failed ? kExitFailureIndicator : 0;
}

int cmd_experiment(const GlobalOptions& g, ExperimentSpec spec) {
  spec.recovery = make_recovery_config(g);
  spec.sample_seed = g.seed;
  spec.jobs = g.jobs;
  const ExperimentResult result = run_experiment(spec);
  write_experiment_csv(result, spec);
  std::printf("epsilon_max    %.10g\n", result.epsilon_max);
  if (result.scarce_failure_size) {
    std::printf("scarce_failure n_samples=%ld\n",
                static_cast<long>(*result.scarce_failure_size));
  } else if (spec.scan_scarce) {
    std::printf("scarce_failure none found above floor\n");
  }
  std::printf("tables written to %s\n",
              spec.output_dir.empty() ? "." : spec.output_dir.c_str());
  return 0;
}

int cmd_epsmax(const std::string& samples_path) {
  const SampleSet samples = load_sample_set(samples_path);
  const DiscreteDistribution emp = empirical_from_samples(samples);
  const double to_upper = wasserstein_to_dirac(emp, samples.upper_bound);
  const double to_lower = wasserstein_to_dirac(emp, samples.lower_bound);
  std::printf("epsilon_max    %.10g\n", std::max(to_upper, to_lower));
  std::printf("to_upper       %.10g\n", to_upper);
  std::printf("to_lower       %.10g\n", to_lower);
  return 0;
}

int cmd_gen_samples(const GlobalOptions& g, const std::string& system_path, Index count,
                    const std::string& out_path) {
  const PowerSystem sys = load_system(system_path);
  save_sample_set(generate_samples(sys, count, g.seed), out_path);
  std::printf("wrote %ld samples to %s\n", static_cast<long>(count), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein DRO forward solver and radius recovery toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOptions g;
  app.add_option("--tol", g.tol, "absolute radius tolerance")
      ->envname("IDRO_TOL");
  app.add_option("--eps-bar", g.eps_bar, "upper limit / failure indicator value")
      ->envname("IDRO_EPS_BAR");
  app.add_option("--engine", g.engine, "bisection|milp|both")->envname("IDRO_ENGINE");
  app.add_option("--jobs", g.jobs, "worker threads (0 = all cores)")
      ->envname("IDRO_JOBS");
  app.add_option("--seed", g.seed, "sample generator seed")->envname("IDRO_SEED");

  std::string system_path, model_path, samples_path, obs_path, out_path, out_dir;
  Index gen_count = 0;
  double eps = 0.0;

  auto* fwd = app.add_subcommand("forward", "solve the forward program at one radius");
  fwd->add_option("--system", system_path, "power system JSON");
  fwd->add_option("--model", model_path, "abstract model JSON");
  fwd->add_option("--samples", samples_path, "sample CSV (with bounds sidecar)");
  fwd->add_option("--gen", gen_count, "generate this many samples instead");
  fwd->add_option("--eps", eps, "Wasserstein radius")
      ->required()
      ->check(CLI::NonNegativeNumber);
  fwd->add_option("--out", out_path, "write the solution JSON here");

  auto* inv = app.add_subcommand("inverse", "recover the radius from an observation");
  inv->add_option("--system", system_path, "power system JSON");
  inv->add_option("--model", model_path, "abstract model JSON");
  inv->add_option("--samples", samples_path, "sample CSV (with bounds sidecar)");
  inv->add_option("--gen", gen_count, "generate this many samples instead");
  inv->add_option("--observation", obs_path, "observed decision JSON (x0 or x)")
      ->required();
  inv->add_option("--out", out_path, "write the recovery report JSON here");

  ExperimentSpec spec;
  auto* exp = app.add_subcommand("experiment", "run the three recovery tables");
  exp->add_option("--system", spec.system_path, "power system JSON")->required();
  exp->add_option("--n-samples", spec.sample_size, "history length per window");
  exp->add_option("--eps-true", spec.epsilon_true_grid, "radius sweep values");
  exp->add_option("--fmax-mult", spec.f_max_multipliers, "line limit multipliers");
  exp->add_option("--ns", spec.sample_size_grid, "sample size sweep");
  exp->add_option("--out-dir", spec.output_dir, "directory for the CSV tables");
  exp->add_flag("!--no-scan", spec.scan_scarce, "skip the scarce-sample scan");

  auto* emx = app.add_subcommand("epsmax", "critical radius of a sample set");
  emx->add_option("--samples", samples_path, "sample CSV (with bounds sidecar)")
      ->required();

  auto* gen = app.add_subcommand("gen-samples", "draw flow-limit perturbations");
  gen->add_option("--system", system_path, "power system JSON")->required();
  gen->add_option("--n", gen_count, "number of samples")->required();
  gen->add_option("--out", out_path, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fwd->parsed()) {
      return cmd_forward(g, system_path, model_path, samples_path, gen_count, eps,
                         out_path);
    }
    if (inv->parsed()) {
      return cmd_inverse(g, system_path, model_path, samples_path, gen_count, obs_path,
                         out_path);
    }
    if (exp->parsed()) return cmd_experiment(g, spec);
    if (emx->parsed()) return cmd_epsmax(samples_path);
    if (gen->parsed()) return cmd_gen_samples(g, system_path, gen_count, out_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
