#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "idro/solver.hpp"
#include "test_util.hpp"

using namespace idro;
using idro::testing::brute_force_lp;
using idro::testing::make_rng;
using idro::testing::random_lp;
using idro::testing::uniform;

namespace {

StandardLp one_var_lp(double c, double ub_row) {
  // min c*x  s.t.  x <= ub_row, x >= 0
  Vector obj(1);
  obj << c;
  Matrix g(1, 1);
  g << 1.0;
  Vector gb(1);
  gb << ub_row;
  StandardLp lp = StandardLp::from_dense(obj, g, gb);
  lp.lower[0] = 0.0;
  return lp;
}

void check_optimal_contract(const StandardLp& lp, const LpSolution& sol) {
  REQUIRE(sol.status == LpStatus::Optimal);
  const Index k = lp.num_ineq();
  const Index q = lp.num_eq();
  // Primal feasibility.
  if (k > 0) {
    const Vector act = lp.ineq_matrix * sol.primal - lp.ineq_rhs;
    for (Index i = 0; i < k; ++i) CHECK(act[i] <= 1e-7);
  }
  if (q > 0) {
    const Vector act = lp.eq_matrix * sol.primal - lp.eq_rhs;
    for (Index i = 0; i < q; ++i) CHECK(std::abs(act[i]) <= 1e-7);
  }
  for (Index j = 0; j < lp.num_vars(); ++j) {
    if (std::isfinite(lp.lower[j])) CHECK(sol.primal[j] >= lp.lower[j] - 1e-7);
    if (std::isfinite(lp.upper[j])) CHECK(sol.primal[j] <= lp.upper[j] + 1e-7);
  }
  // Dual feasibility.
  for (Index i = 0; i < k; ++i) CHECK(sol.dual_ineq[i] >= -1e-10);
  // Stationarity: c + G'a + E'b - dl + du = 0.
  Vector grad = lp.objective;
  if (k > 0) grad += lp.ineq_matrix.transpose() * sol.dual_ineq;
  if (q > 0) grad += lp.eq_matrix.transpose() * sol.dual_eq;
  grad -= sol.dual_lower;
  grad += sol.dual_upper;
  CHECK(grad.cwiseAbs().maxCoeff() <= 1e-6);
  // Complementary slackness on rows.
  if (k > 0) {
    const Vector slack = lp.ineq_rhs - lp.ineq_matrix * sol.primal;
    for (Index i = 0; i < k; ++i) {
      CHECK(std::abs(sol.dual_ineq[i] * slack[i]) <= 1e-6 * (1.0 + std::abs(lp.ineq_rhs[i])));
    }
  }
}

}  // namespace

TEST_CASE("one dimensional maximization hits the row and reports its dual") {
  const StandardLp lp = one_var_lp(-1.0, 3.0);
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.primal[0] == doctest::Approx(3.0));
  CHECK(sol.dual_ineq[0] == doctest::Approx(1.0));
  CHECK(sol.objective_value == doctest::Approx(-3.0));
}

TEST_CASE("empty feasible set is reported infeasible") {
  const StandardLp lp = one_var_lp(1.0, -1.0);
  CHECK(solve_lp(lp).status == LpStatus::Infeasible);
}

TEST_CASE("missing upper rows give an unbounded ray") {
  Vector obj(1);
  obj << -1.0;
  StandardLp lp = StandardLp::from_dense(obj, Matrix(0, 1), Vector(0));
  lp.lower[0] = 0.0;
  CHECK(solve_lp(lp).status == LpStatus::Unbounded);
}

TEST_CASE("equality rows and free variables") {
  // min x + y  s.t.  x + y == 2, x - y <= 1
  Vector obj(2);
  obj << 1.0, 1.0;
  Matrix g(1, 2);
  g << 1.0, -1.0;
  Vector gb(1);
  gb << 1.0;
  Matrix e(1, 2);
  e << 1.0, 1.0;
  Vector eb(1);
  eb << 2.0;
  const StandardLp lp = StandardLp::from_dense(obj, g, gb, e, eb);
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective_value == doctest::Approx(2.0));
  check_optimal_contract(lp, sol);
}

TEST_CASE("deterministic: identical inputs give identical output") {
  auto rng = make_rng(7);
  const StandardLp lp = random_lp(rng, 4, 6, 1);
  const LpSolution a = solve_lp(lp);
  const LpSolution b = solve_lp(lp);
  REQUIRE(a.status == b.status);
  if (a.status == LpStatus::Optimal) {
    CHECK((a.primal - b.primal).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.objective_value == b.objective_value);
  }
}

TEST_CASE("randomized LPs match vertex enumeration") {
  auto rng = make_rng(20240811);
  int optimal_seen = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 4);  // up to 5 vars
    const Index k = 1 + static_cast<Index>(rng() % 6);
    const Index q = static_cast<Index>(rng() % std::min<Index>(n, 2));
    const StandardLp lp = random_lp(rng, n, k, q);
    const auto expect = brute_force_lp(lp);
    const LpSolution sol = solve_lp(lp);
    INFO("trial ", trial, " n=", n, " k=", k, " q=", q);
    REQUIRE(sol.status == expect.status);
    if (sol.status == LpStatus::Optimal) {
      ++optimal_seen;
      CHECK(sol.objective_value == doctest::Approx(expect.objective).epsilon(1e-8));
      check_optimal_contract(lp, sol);
    }
  }
  CHECK(optimal_seen > 60);  // generator must mostly produce solvable cases
}

TEST_CASE("re-solving an optimal instance reproduces the objective") {
  auto rng = make_rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const StandardLp lp = random_lp(rng, 3, 5, 0);
    const LpSolution first = solve_lp(lp);
    if (first.status != LpStatus::Optimal) continue;
    const LpSolution second = solve_lp(lp);
    CHECK(std::abs(first.objective_value - second.objective_value) <= 1e-9);
  }
}

TEST_CASE("duality gap stays within tolerance on random instances") {
  auto rng = make_rng(4321);
  for (int trial = 0; trial < 40; ++trial) {
    const StandardLp lp = random_lp(rng, 3, 7, 0);
    const LpSolution sol = solve_lp(lp);
    if (sol.status != LpStatus::Optimal) continue;
    // Dual objective: -h'a - l'dl + u'du with the stationarity convention.
    double dual_obj = -lp.ineq_rhs.dot(sol.dual_ineq);
    for (Index j = 0; j < lp.num_vars(); ++j) {
      dual_obj += lp.lower[j] * sol.dual_lower[j];
      dual_obj -= lp.upper[j] * sol.dual_upper[j];
    }
    CHECK(std::abs(sol.objective_value - dual_obj) <=
          1e-8 * (1.0 + std::abs(sol.objective_value)));
  }
}

TEST_CASE("many-row LPs route through the dual and agree with enumeration") {
  auto rng = make_rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 2);
    const Index k = 12 + static_cast<Index>(rng() % 8);  // rows >> vars
    StandardLp lp = random_lp(rng, n, k, 0);
    lp.lower.setConstant(-kInfinity);  // force bound folding paths
    lp.upper.setConstant(kInfinity);
    const auto expect = brute_force_lp(lp);
    const LpSolution sol = solve_lp(lp);
    INFO("trial ", trial);
    REQUIRE(sol.status == expect.status);
    if (sol.status == LpStatus::Optimal) {
      CHECK(sol.objective_value == doctest::Approx(expect.objective).epsilon(1e-8));
      check_optimal_contract(lp, sol);
    }
  }
}

TEST_CASE("iteration budget exhaustion raises NumericalFailure") {
  auto rng = make_rng(5);
  const StandardLp lp = random_lp(rng, 5, 8, 0);
  SolverConfig cfg;
  cfg.max_iterations = 1;
  CHECK_THROWS_AS(solve_lp(lp, cfg), NumericalFailure);
}

TEST_CASE("single complementarity pair picks the better branch") {
  // Variables (y, s, z). Encoded pair: y <= 10 z, s <= 10 (1 - z),
  // coupling s = 1 - y, box y <= 2. Objective min -y.
  Vector obj(3);
  obj << -1.0, 0.0, 0.0;
  Matrix g(3, 3);
  Vector gb(3);
  g << 1.0, 0.0, -10.0,  // y - 10 z <= 0
      0.0, 1.0, 10.0,    // s + 10 z <= 10
      1.0, 0.0, 0.0;     // y <= 2
  gb << 0.0, 10.0, 2.0;
  Matrix e(1, 3);
  e << 1.0, 1.0, 0.0;  // y + s == 1
  Vector eb(1);
  eb << 1.0;
  StandardLp base = StandardLp::from_dense(obj, g, gb, e, eb);
  base.lower << 0.0, 0.0, 0.0;
  base.upper << kInfinity, kInfinity, 1.0;

  MixedBinaryLp milp;
  milp.base = base;
  milp.binary_indices = {2};
  milp.big_m_values = Vector::Constant(1, 10.0);

  const MixedBinarySolution sol = solve_mixed_binary(milp);
  REQUIRE(sol.solution.status == LpStatus::Optimal);
  CHECK(sol.solution.primal[0] == doctest::Approx(1.0));
  CHECK(sol.solution.primal[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(sol.binary_values[0] - 1.0) <= 1e-6);
}

TEST_CASE("binaries fixed by bounds reduce to plain LP") {
  Vector obj(2);
  obj << 1.0, 5.0;
  Matrix g(1, 2);
  g << -1.0, 0.0;
  Vector gb(1);
  gb << -0.5;
  StandardLp base = StandardLp::from_dense(obj, g, gb);
  base.lower << 0.0, 1.0;
  base.upper << 2.0, 1.0;

  MixedBinaryLp milp;
  milp.base = base;
  milp.binary_indices = {1};
  milp.big_m_values = Vector::Constant(1, 1.0);

  const MixedBinarySolution sol = solve_mixed_binary(milp);
  const LpSolution plain = solve_lp(base);
  REQUIRE(sol.solution.status == LpStatus::Optimal);
  CHECK(sol.solution.objective_value == doctest::Approx(plain.objective_value));
}

TEST_CASE("infeasible on both branches reports infeasible") {
  // z binary; rows force z >= 0.4 and z <= 0.6, impossible at {0,1}.
  Vector obj(1);
  obj << 0.0;
  Matrix g(2, 1);
  g << -1.0, 1.0;
  Vector gb(2);
  gb << -0.4, 0.6;
  StandardLp base = StandardLp::from_dense(obj, g, gb);
  base.lower << 0.0;
  base.upper << 1.0;

  MixedBinaryLp milp;
  milp.base = base;
  milp.binary_indices = {0};
  milp.big_m_values = Vector::Constant(1, 1.0);
  CHECK(solve_mixed_binary(milp).solution.status == LpStatus::Infeasible);
}

TEST_CASE("branch and bound matches exhaustive binary enumeration") {
  auto rng = make_rng(777);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n_cont = 2;
    const Index nb = 2 + static_cast<Index>(rng() % 5);  // up to 6 binaries
    const Index n = n_cont + nb;
    const Index k = 4 + static_cast<Index>(rng() % 5);
    StandardLp base = random_lp(rng, n, k, 0);
    base.lower.tail(nb).setZero();
    base.upper.tail(nb).setOnes();

    MixedBinaryLp milp;
    milp.base = base;
    for (Index j = 0; j < nb; ++j) milp.binary_indices.push_back(n_cont + j);
    milp.big_m_values = Vector::Constant(nb, 1.0);

    // Oracle: enumerate all assignments.
    double best = kInfinity;
    bool any = false;
    for (unsigned mask = 0; mask < (1u << nb); ++mask) {
      StandardLp fixed = base;
      for (Index j = 0; j < nb; ++j) {
        const double v = (mask >> j) & 1u ? 1.0 : 0.0;
        fixed.lower[n_cont + j] = v;
        fixed.upper[n_cont + j] = v;
      }
      const LpSolution s = solve_lp(fixed);
      if (s.status == LpStatus::Optimal) {
        any = true;
        best = std::min(best, s.objective_value);
      }
    }

    INFO("trial ", trial, " nb=", nb);
    if (!any) {
      CHECK(solve_mixed_binary(milp).solution.status == LpStatus::Infeasible);
    } else {
      const MixedBinarySolution sol = solve_mixed_binary(milp);
      REQUIRE(sol.solution.status == LpStatus::Optimal);
      CHECK(sol.solution.objective_value == doctest::Approx(best).epsilon(1e-7));
    }
  }
}

TEST_CASE("debug dump lists rows in the documented order") {
  const StandardLp lp = one_var_lp(-1.0, 3.0);
  std::ostringstream os;
  dump_standard_lp(lp, os);
  const std::string text = os.str();
  CHECK(text.find("minimize") != std::string::npos);
  CHECK(text.find("<=") < text.find("z_0"));
}
