#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idro/inverse.hpp"
#include "test_util.hpp"

using namespace idro;
using idro::testing::make_rng;
using idro::testing::make_t1;
using idro::testing::random_cc_problem;
using idro::testing::uniform;

namespace {

Observation forward_observation(const CcLinearProgram& model, const SampleSet& samples,
                                double eps_true) {
  return {solve_forward(assemble(model, samples, eps_true)).x_opt, std::nullopt};
}

/// T1 variant with a wider chance row (x + xi <= 2) and the ordinary row at
/// x <= 1.5. The risk row only starts binding at radius 0.05, so forward
/// solves below that are non-binding observations.
idro::testing::TinyProblem make_t1_slack() {
  auto t = make_t1();
  t.model.h[0] = 1.5;
  t.model.d[0] = 2.0;
  return t;
}

void check_trace_is_interval(const RecoveryReport& report) {
  double last_feasible = -1.0;
  double first_infeasible = kInfinity;
  for (const auto& e : report.trace) {
    if (e.verdict == TraceVerdict::Feasible) {
      last_feasible = std::max(last_feasible, e.epsilon);
    } else if (e.verdict == TraceVerdict::Infeasible) {
      first_infeasible = std::min(first_infeasible, e.epsilon);
    }
  }
  CHECK(last_feasible <= first_infeasible);
}

}  // namespace

TEST_CASE("bisection roundtrip on T1 recovers the exact radius") {
  const auto t1 = make_t1();
  for (const double eps_true : {0.05, 0.01, 0.08}) {
    const Observation obs = forward_observation(t1.model, t1.samples, eps_true);
    const RecoveryReport rep = recover_bisection(t1.model, t1.samples, obs);
    INFO("eps_true = ", eps_true);
    CHECK(std::abs(rep.epsilon_star - eps_true) <= 1e-6);
    CHECK(!rep.failed);
    CHECK(rep.binding_at_star);
    CHECK(rep.epsilon_star >= 0.0);
    CHECK(rep.epsilon_star <= 100.0);
    check_trace_is_interval(rep);
  }
}

TEST_CASE("bisection at zero radius returns zero") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 0.0);
  const RecoveryReport rep = recover_bisection(t1.model, t1.samples, obs);
  CHECK(std::abs(rep.epsilon_star) <= 1e-6);
  CHECK(!rep.failed);
}

TEST_CASE("radius at or beyond the critical value fails with the cap") {
  const auto t1 = make_t1();  // epsilon_max = 1
  for (const double eps_true : {1.1, 1.0}) {
    const Observation obs = forward_observation(t1.model, t1.samples, eps_true);
    const RecoveryReport rep = recover_bisection(t1.model, t1.samples, obs);
    INFO("eps_true = ", eps_true);
    CHECK(rep.epsilon_star == doctest::Approx(100.0));
    CHECK(rep.failed);
  }
}

TEST_CASE("failure flag implies the cap value") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 2.0);
  const RecoveryReport rep = recover_bisection(t1.model, t1.samples, obs);
  CHECK(rep.failed);
  CHECK(rep.epsilon_star == doctest::Approx(100.0));
}

TEST_CASE("epsilon_bar below the critical radius is a configuration error") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 0.05);
  RecoveryConfig cfg;
  cfg.epsilon_bar = 0.5;  // epsilon_max(t1) = 1
  CHECK_THROWS_AS(recover_bisection(t1.model, t1.samples, obs, cfg), ConfigError);
}

TEST_CASE("observation that never reaches optimality is rejected") {
  const auto t1 = make_t1();
  // x0 = -0.5 stays feasible at every radius but its cost exceeds the
  // forward optimum everywhere.
  const Observation obs{Vector::Constant(1, -0.5), std::nullopt};
  CHECK_THROWS_AS(recover_bisection(t1.model, t1.samples, obs),
                  ObservationNotRationalizable);
}

TEST_CASE("observation infeasible at every radius is rejected") {
  const auto t1 = make_t1();
  const Observation obs{Vector::Constant(1, 2.0), std::nullopt};
  CHECK_THROWS_AS(recover_bisection(t1.model, t1.samples, obs),
                  ObservationNotRationalizable);
}

TEST_CASE("non-binding forward solve recovers the binding radius instead") {
  const auto t = make_t1_slack();
  const double eps_true = 0.02;
  const ForwardSolution fwd = solve_forward(assemble(t.model, t.samples, eps_true));
  REQUIRE(!fwd.cvar_binding);  // x stops at the ordinary row
  const Observation obs{fwd.x_opt, std::nullopt};
  const RecoveryReport rep = recover_bisection(t.model, t.samples, obs);
  // x + xi <= 2 prices in only at radius 0.05 where 2 - 10 eps = 1.5.
  CHECK(rep.epsilon_star == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(rep.epsilon_star > eps_true);
  CHECK(rep.binding_at_star);
}

TEST_CASE("kkt-milp engine agrees with bisection on T1") {
  const auto t1 = make_t1();
  for (const double eps_true : {0.05, 0.0, 0.09}) {
    const Observation obs = forward_observation(t1.model, t1.samples, eps_true);
    const RecoveryReport bis = recover_bisection(t1.model, t1.samples, obs);
    const RecoveryReport milp = recover_kkt_milp(t1.model, t1.samples, obs);
    INFO("eps_true = ", eps_true);
    CHECK(std::abs(bis.epsilon_star - milp.epsilon_star) <= 1e-5);
    CHECK(!milp.failed);
  }
}

TEST_CASE("kkt-milp flags the overly conservative case") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 1.1);
  const RecoveryReport rep = recover_kkt_milp(t1.model, t1.samples, obs);
  CHECK(rep.failed);
  CHECK(rep.epsilon_star == doctest::Approx(100.0));
}

TEST_CASE("stationarity with all duals pinned to zero rejects a nonzero cost") {
  // One variable, cost 1, single row x <= 1 whose dual is forced to zero:
  // c + G'y = 0 becomes 1 = 0.
  Vector obj = Vector::Zero(2);  // (y, unused)
  Matrix eq(1, 2);
  eq << 1.0, 0.0;  // 1*y = -c = -1
  Vector eq_rhs = Vector::Constant(1, -1.0);
  StandardLp lp = StandardLp::from_dense(obj, Matrix(0, 2), Vector(0), eq, eq_rhs);
  lp.lower << 0.0, 0.0;  // y >= 0 makes  y = -1 impossible
  CHECK(solve_lp(lp).status == LpStatus::Infeasible);
}

TEST_CASE("engine dispatch and the per-engine pair") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 0.05);
  RecoveryConfig cfg;
  cfg.engine = RecoveryEngine::Both;
  const RecoveryReport rep = recover(t1.model, t1.samples, obs, cfg);
  CHECK(rep.engine == "both");
  REQUIRE(rep.per_engine.has_value());
  CHECK(std::abs(rep.per_engine->first - rep.per_engine->second) <= 1e-5);
}

TEST_CASE("randomized roundtrips: both engines, no rejections, agreement") {
  auto rng = make_rng(2026);
  int tested = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto prob = random_cc_problem(rng, 1 + static_cast<Index>(rng() % 2),
                                        1 + static_cast<Index>(rng() % 2), 1,
                                        2 + static_cast<Index>(rng() % 2));
    for (const double eps_true : {0.0, 0.05, 0.15}) {
      const Observation obs = forward_observation(prob.model, prob.samples, eps_true);
      RecoveryReport bis, milp;
      REQUIRE_NOTHROW(bis = recover_bisection(prob.model, prob.samples, obs));
      REQUIRE_NOTHROW(milp = recover_kkt_milp(prob.model, prob.samples, obs));
      INFO("trial ", trial, " eps_true=", eps_true);
      CHECK(std::abs(bis.epsilon_star - milp.epsilon_star) <= 1e-5);
      check_trace_is_interval(bis);
      ++tested;
    }
  }
  CHECK(tested == 15);
}

TEST_CASE("data-driven recovery takes the smallest non-failed estimate") {
  const auto t1 = make_t1();
  const std::vector<SampleSet> windows(3, t1.samples);

  SUBCASE("constant periods") {
    std::vector<Observation> obs;
    for (int t = 0; t < 3; ++t) {
      obs.push_back(forward_observation(t1.model, t1.samples, 0.05));
    }
    const DataDrivenResult res = recover_data_driven(t1.model, windows, obs);
    CHECK(res.final.epsilon_star == doctest::Approx(0.05).epsilon(1e-4));
    CHECK(!res.final.failed);
    CHECK(!res.variation);
  }

  SUBCASE("one deviating period raises the variation flag") {
    std::vector<Observation> obs;
    obs.push_back(forward_observation(t1.model, t1.samples, 0.05));
    obs.push_back(forward_observation(t1.model, t1.samples, 0.09));
    obs.push_back(forward_observation(t1.model, t1.samples, 0.05));
    const DataDrivenResult res = recover_data_driven(t1.model, windows, obs);
    CHECK(res.final.epsilon_star == doctest::Approx(0.05).epsilon(1e-4));
    CHECK(res.variation);
    REQUIRE(res.per_period.size() == 3);
    CHECK(res.per_period[1].epsilon_star == doctest::Approx(0.09).epsilon(1e-4));
  }

  SUBCASE("every period failed propagates the failure") {
    std::vector<Observation> obs(3, forward_observation(t1.model, t1.samples, 1.5));
    const DataDrivenResult res = recover_data_driven(t1.model, windows, obs);
    CHECK(res.final.failed);
    CHECK(res.final.epsilon_star == doctest::Approx(100.0));
  }

  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(recover_data_driven(t1.model, {}, {}), std::invalid_argument);
  }
}

TEST_CASE("relaxed recovery reduces to the exact engine on clean data") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 0.05);
  const RecoveryReport exact = recover_kkt_milp(t1.model, t1.samples, obs);
  const RecoveryReport relaxed = recover_relaxed(t1.model, t1.samples, obs, {}, 1e3);
  CHECK(std::abs(relaxed.epsilon_star - exact.epsilon_star) <= 1e-5);
  // The boundary radius is located to bisection tolerance, so the residual
  // slack there is the local sensitivity times that width, not exact zero.
  CHECK(relaxed.total_slack <= 2e-3);
}

TEST_CASE("relaxed recovery absorbs a perturbed observation") {
  const auto t1 = make_t1();
  const double eps_true = 0.05;
  Observation obs = forward_observation(t1.model, t1.samples, eps_true);
  obs.x0[0] += 1e-3;
  const RecoveryReport rep = recover_relaxed(t1.model, t1.samples, obs, {}, 1e3);
  CHECK(std::abs(rep.epsilon_star - eps_true) <= 0.1 * eps_true);
  CHECK(rep.total_slack >= 0.0);
  CHECK(!rep.failed);
}

TEST_CASE("relaxed recovery rejects an everywhere-infeasible observation") {
  const auto t1 = make_t1();
  const Observation obs{Vector::Constant(1, 2.0), std::nullopt};
  CHECK_THROWS_AS(recover_relaxed(t1.model, t1.samples, obs, {}, 1e3),
                  ObservationNotRationalizable);
}

TEST_CASE("diagnosis lists exactly the supportable explanations") {
  const auto t1 = make_t1();

  RecoveryReport ok;
  ok.failed = false;
  CHECK(diagnose(ok, t1.samples).nominal);

  RecoveryReport failed;
  failed.failed = true;
  failed.epsilon_star = 100.0;
  failed.binding_at_star = false;

  SampleSet small = t1.samples;  // N_s = 1
  const Diagnosis d = diagnose(failed, small);
  CHECK(!d.nominal);
  bool has_eps = false, has_binding = false, has_samples = false;
  for (const auto& c : d.candidates) {
    has_eps = has_eps || c.scenario == FailureScenario::UnsuitableEpsilon;
    has_binding = has_binding || c.scenario == FailureScenario::ChanceConstraintNotBinding;
    has_samples = has_samples || c.scenario == FailureScenario::SamplesNotRepresentative;
  }
  CHECK(has_eps);
  CHECK(has_binding);
  CHECK(has_samples);

  // With a large sample count and a binding row only the radius scenario
  // remains supportable.
  failed.binding_at_star = true;
  SampleSet big;
  big.samples = Matrix::Zero(64, 1);
  big.lower_bound = Vector::Constant(1, -1.0);
  big.upper_bound = Vector::Constant(1, 1.0);
  const Diagnosis d2 = diagnose(failed, big);
  CHECK(d2.candidates.size() == 1);
  CHECK(d2.candidates[0].scenario == FailureScenario::UnsuitableEpsilon);
}

TEST_CASE("report export carries the trace") {
  const auto t1 = make_t1();
  const Observation obs = forward_observation(t1.model, t1.samples, 0.03);
  const RecoveryReport rep = recover_bisection(t1.model, t1.samples, obs);
  const std::string text = to_json(rep);
  for (const char* key :
       {"\"epsilon_star\"", "\"failed\"", "\"engine\"", "\"trace\"", "\"verdict\""}) {
    CHECK(text.find(key) != std::string::npos);
  }
}
