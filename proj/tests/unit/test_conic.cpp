#include "oracles.hpp"
#include "random_lp.hpp"
#include "stiv/conic.hpp"

#include <doctest.h>

#include <random>

using namespace stiv::conic;
using oracle::random_bounded_lp;

TEST_CASE("lp: single bound") {
  LinearProgram lp(1);
  lp.objective << 1.0;
  lp.lower << 3.0;
  auto r = solve_lp(lp);
  REQUIRE(r.optimal());
  CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(r.objective == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("lp: degenerate optimum, objective only") {
  LinearProgram lp(2);
  lp.objective << 1.0, 1.0;
  lp.add_inequality(-VectorXd::Ones(2), -1.0);
  lp.lower.setZero();
  auto r = solve_lp(lp);
  REQUIRE(r.optimal());
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.residual <= 1e-8);
}

TEST_CASE("lp: infeasible and unbounded are statuses") {
  LinearProgram inf(1);
  inf.objective << 1.0;
  inf.lower << 2.0;
  inf.upper << 3.0;
  inf.add_inequality(VectorXd::Ones(1), 1.0);
  CHECK(solve_lp(inf).status == SolveStatus::infeasible);

  LinearProgram unb(2);
  unb.objective << -1.0, 0.0;
  unb.lower << 0.0, 0.0;
  unb.add_inequality((VectorXd(2) << -1.0, 1.0).finished(), 1.0);
  CHECK(solve_lp(unb).status == SolveStatus::unbounded);
}

TEST_CASE("lp: fixed variables become equalities") {
  LinearProgram lp(2);
  lp.objective << 1.0, 2.0;
  lp.lower << 1.5, 0.0;
  lp.upper << 1.5, 10.0;
  lp.add_inequality((VectorXd(2) << -1.0, -1.0).finished(), -4.0);
  auto r = solve_lp(lp);
  REQUIRE(r.optimal());
  CHECK(r.objective == doctest::Approx(1.5 + 2 * 2.5).epsilon(1e-8));
}

TEST_CASE("lp: random bounded programs match vertex enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto R = random_bounded_lp(rng, trial % 3 == 0);
    auto r = solve_lp(R.lp);
    const double ref = oracle::vertex_min(R.lp.objective, R.A, R.b, R.lp.eq_matrix, R.lp.eq_rhs);
    CAPTURE(trial);
    if (std::isinf(ref)) {
      CHECK(r.status == SolveStatus::infeasible);
      continue;
    }
    REQUIRE(r.optimal());
    CHECK(std::abs(r.objective - ref) <= 1e-6);
    CHECK(constraint_violation(R.lp, r.x) <= 1e-8);
    CHECK(r.dual_objective <= r.objective + 1e-8);
  }
}

TEST_CASE("lp: adding a constraint never lowers the minimum") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 40; ++trial) {
    auto R = random_bounded_lp(rng, false);
    auto r1 = solve_lp(R.lp);
    if (!r1.optimal()) continue;
    LinearProgram tighter = R.lp;
    VectorXd a(R.lp.num_vars());
    for (Index j = 0; j < a.size(); ++j) a(j) = g(rng);
    tighter.add_inequality(a, 0.5);
    auto r2 = solve_lp(tighter);
    if (r2.status == SolveStatus::infeasible) continue;
    REQUIRE(r2.optimal());
    CHECK(r2.objective >= r1.objective - 1e-7);
  }
}

TEST_CASE("lp: deterministic") {
  std::mt19937_64 rng(99);
  auto R = random_bounded_lp(rng, true);
  auto a = solve_lp(R.lp), b = solve_lp(R.lp);
  CHECK(a.status == b.status);
  CHECK(a.objective == b.objective);
  CHECK((a.x - b.x).norm() == 0.0);
}

TEST_CASE("socp: norm of a fixed vector") {
  ConicProgram p(3);
  p.lp.objective << 1.0, 0.0, 0.0;
  p.lp.lower << 0.0, 3.0, 4.0;
  p.lp.upper << kInf, 3.0, 4.0;
  p.cones.push_back(SecondOrderCone::of_variables(3, 0, {1, 2}));
  auto r = solve_socp(p);
  REQUIRE(r.optimal());
  CHECK(r.objective == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("socp: zero vector gives t = 0") {
  ConicProgram p(3);
  p.lp.objective << 1.0, 0.0, 0.0;
  p.lp.add_equality(VectorXd::Unit(3, 1), 0.0);
  p.lp.add_equality(VectorXd::Unit(3, 2), 0.0);
  p.cones.push_back(SecondOrderCone::of_variables(3, 0, {1, 2}));
  auto r = solve_socp(p);
  REQUIRE(r.optimal());
  CHECK(std::abs(r.objective) <= 1e-8);
}

TEST_CASE("socp: t + |b| with t >= |Y - X b| matches a grid") {
  // variables: t, b, w ; minimise t + w, w >= |b|, t >= |Y - X b|
  VectorXd Y(4), X(4);
  Y << 1.0, 2.0, 0.5, 1.5;
  X << 0.8, 1.7, 0.2, 1.1;
  ConicProgram p(3);
  p.lp.objective << 1.0, 0.0, 1.0;
  p.lp.add_inequality((VectorXd(3) << 0, 1, -1).finished(), 0.0);
  p.lp.add_inequality((VectorXd(3) << 0, -1, -1).finished(), 0.0);
  SecondOrderCone c;
  c.M = MatrixXd::Zero(5, 3);
  c.q = VectorXd::Zero(5);
  c.M(0, 0) = 1.0;
  c.M.block(1, 1, 4, 1) = -X;
  c.q.tail(4) = Y;
  p.cones.push_back(c);
  auto r = solve_socp(p);
  REQUIRE(r.optimal());
  auto f = [&](double b) { return (Y - X * b).norm() + std::abs(b); };
  const double grid = oracle::grid_min_1d(f, -3.0, 3.0, 60000);
  CHECK(std::abs(r.objective - grid) <= 1e-5);
  CHECK(r.residual <= 1e-8);
}

TEST_CASE("socp: random programs re-verify and respect duality") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  int solved = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 5;
    ConicProgram p(n + 1);
    // min t + c'x s.t. t >= |M x - q|, box on x
    for (int j = 0; j < n; ++j) p.lp.objective(j + 1) = 0.3 * g(rng);
    p.lp.objective(0) = 1.0;
    SecondOrderCone c;
    const int q = 1 + trial % 4;
    c.M = MatrixXd::Zero(q + 1, n + 1);
    c.q = VectorXd::Zero(q + 1);
    c.M(0, 0) = 1.0;
    for (int i = 1; i <= q; ++i) {
      for (int j = 0; j < n; ++j) c.M(i, j + 1) = g(rng);
      c.q(i) = g(rng);
    }
    p.cones.push_back(c);
    for (int j = 0; j < n; ++j) {
      p.lp.lower(j + 1) = -2.0;
      p.lp.upper(j + 1) = 2.0;
    }
    auto r = solve_socp(p);
    REQUIRE(r.optimal());
    ++solved;
    CHECK(constraint_violation(p, r.x) <= 1e-8);
    CHECK(r.dual_objective <= r.objective + 1e-7);
    CHECK(r.objective - r.dual_objective <= 1e-6 * std::max(1.0, std::abs(r.objective)));
  }
  CHECK(solved == 60);
}

TEST_CASE("socp: infeasible cone") {
  ConicProgram p(2);
  p.lp.objective << 1.0, 0.0;
  p.lp.upper(0) = 1.0;
  p.lp.lower(1) = 2.0;
  p.cones.push_back(SecondOrderCone::of_variables(2, 0, {1}));
  CHECK(solve_socp(p).status == SolveStatus::infeasible);
}
