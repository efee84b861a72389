#include "stiv/errors.hpp"
#include "stiv/model.hpp"
#include "stiv/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace stiv;

namespace {

// Phi^{-1}(p) by bisection on the complementary error function, in long double.
double quantile_by_bisection(double p) {
  long double lo = -40.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    const long double cdf = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
    (cdf < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

} // namespace

TEST_CASE("minimal CSV loads") {
  std::istringstream in("y,x1,z1\n1,1,1\n2,2,2.5\n3,3,3\n");
  Dataset d = load_dataset(in, {1});
  CHECK(d.n() == 3);
  CHECK(d.K() == 1);
  CHECK(d.L() == 1);
  CHECK(d.endo() == IndexSet{0});
  CHECK(d.Z()(1, 0) == 2.5);
}

TEST_CASE("columns may come in any order and zbar is optional") {
  std::istringstream in("z2,y,zbar1,x2,x1,z1\n1,0,5,1,3,2\n-1,1,6,-1,4,1\n");
  Dataset d = load_dataset(in, {1});
  CHECK(d.K() == 2);
  CHECK(d.L() == 2);
  CHECK(d.L1() == 1);
  CHECK(d.instrument_of(1) == 1);
  CHECK(d.instrument_of(0) == -1);
  CHECK(d.zbar()(1, 0) == 6.0);
}

TEST_CASE("exogenous regressor without an instrument copy is rejected") {
  std::istringstream in("y,x1,x2,z1,z2\n1,1,1,1,2\n2,2,3,2,2\n3,1,1,3,1\n");
  try {
    load_dataset(in, {1});
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }
}

TEST_CASE("explicit exogenous map is checked bit-exactly") {
  std::istringstream ok("y,x1,x2,z1,z2\n1,1,2,1,2\n2,2,3,2,3\n");
  InstrumentSpec spec;
  spec.exogenous_map[2] = 2;
  CHECK(load_dataset(ok, {1}, spec).instrument_of(1) == 1);
  std::istringstream bad("y,x1,x2,z1,z2\n1,1,2,1,2\n2,2,3,2,3\n");
  spec.exogenous_map[2] = 1;
  CHECK_THROWS_AS(load_dataset(bad, {1}, spec), ValidationError);
}

TEST_CASE("malformed input reports row and column") {
  std::istringstream in("y,x1,z1\n1,1,1\n2,abc,2\n");
  try {
    load_dataset(in, {1});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 2);
  }
  std::istringstream gap("y,x1,x3,z1\n1,1,1,1\n");
  CHECK_THROWS_AS(load_dataset(gap, {1}), ParseError);
  std::istringstream nan("y,x1,z1\n1,nan,1\n");
  CHECK_THROWS_AS(load_dataset(nan, {1}), Error);
}

TEST_CASE("zero columns and bad endogenous indices are rejected") {
  std::istringstream zero("y,x1,z1\n1,0,1\n2,0,2\n");
  CHECK_THROWS_AS(load_dataset(zero, {1}), DegenerateError);
  std::istringstream endo("y,x1,z1\n1,1,1\n2,2,2\n");
  CHECK_THROWS_AS(load_dataset(endo, {2}), ValidationError);
  MatrixXd X(2, 2), Z(2, 1);
  X << 1, 2, 3, 4;
  Z << 1, 2;
  CHECK_THROWS_AS(Dataset(VectorXd::Ones(2), X, Z, {0, 1}), ValidationError); // L < K
}

TEST_CASE("simulation layout round-trips through CSV") {
  DgpParams p = DgpParams::paper();
  p.seed = 3;
  Dataset d = generate_dgp(p);
  CHECK(d.n() == 49);
  CHECK(d.K() == 25);
  CHECK(d.L() == 50);
  for (int k = 1; k < 25; ++k) CHECK(d.instrument_of(k) == 26 + k - 1);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  Dataset e = load_dataset(buf, {1});
  CHECK(e.X() == d.X());
  CHECK(e.Z() == d.Z());
  CHECK(e.y() == d.y());
}

TEST_CASE("scaling by hand") {
  MatrixXd X(2, 1);
  X << 1, -2;
  Dataset d(VectorXd::Zero(2), X, X, {0});
  ScaledDesign sd = scale_design(d);
  CHECK(sd.x_star(0) == 2.0);
  CHECK(sd.z_star(0) == 2.0);
  // (1/n) (1/z*) (1*1 + (-2)(-2)) (1/x*) = (1/2)(1/2)(5)(1/2)
  CHECK(sd.Psi(0, 0) == doctest::Approx(0.625));

  MatrixXd Y(2, 1);
  Y << 1, 0;
  CHECK(scale_design(Dataset(VectorXd::Zero(2), Y, Y, {0})).Psi(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("Psi is bounded and invariant to column rescaling") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd X(30, 3), Z(30, 5);
    for (Index i = 0; i < 30; ++i) {
      for (Index l = 0; l < 5; ++l) Z(i, l) = g(rng) * (l + 1);
      X(i, 0) = g(rng);
      X(i, 1) = Z(i, 3);
      X(i, 2) = Z(i, 4);
    }
    Dataset d(VectorXd::Zero(30), X, Z, {0});
    ScaledDesign sd = scale_design(d);
    CHECK(sd.Psi.cwiseAbs().maxCoeff() <= 1.0);
    MatrixXd X2 = X, Z2 = Z;
    X2.col(0) *= -3.5;
    Z2.col(2) *= 0.01;
    ScaledDesign sd2 = scale_design(Dataset(VectorXd::Zero(30), X2, Z2, {0}));
    MatrixXd expect = sd.Psi;
    expect.col(0) *= -1.0; // the sign of the column survives the normalisation
    CHECK((sd2.Psi - expect).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("row subsampling keeps the exogenous mapping") {
  DgpParams p = DgpParams::paper(20, 4, 6);
  Dataset d = generate_dgp(p);
  Dataset s = d.rows({0, 3, 5, 7});
  CHECK(s.n() == 4);
  for (int k = 1; k < 4; ++k) CHECK(s.instrument_of(k) == d.instrument_of(k));
}

TEST_CASE("normal quantile against bisection") {
  for (double p : {1e-10, 1e-6, 0.001, 0.025, 0.3, 0.5, 0.9, 0.975, 0.9995, 1 - 1e-9})
    CHECK(std::abs(normal_quantile(p) - quantile_by_bisection(p)) <= 1e-9);
}

TEST_CASE("practical rate") {
  const double r = rate_r(49, 50, {}).r;
  CHECK(r == doctest::Approx(quantile_by_bisection(0.9995) / 7.0).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.47007).epsilon(1e-4));
  for (Index n : {10, 100, 1000}) CHECK(rate_r(n + 1, 50, {}).r < rate_r(n, 50, {}).r);
  for (double L : {2.0, 10.0, 100.0}) CHECK(rate_r(100, L + 1, {}).r > rate_r(100, L, {}).r);
  CHECK_THROWS_AS(rate_r(10, 1.0, {}), DegenerateError);
}

TEST_CASE("full rate mode") {
  RateConfig cfg;
  cfg.mode = RateMode::full;
  cfg.A = 1.0;
  cfg.delta = 1.0;
  cfg.d_n_delta = 10.0;
  CHECK(rate_r(2, std::exp(1.0), cfg).r == doctest::Approx(1.0).epsilon(1e-14));

  cfg.A = 2.0;
  const Rate rr = rate_r(100, 10.0, cfg);
  const long double t = 2.0L * std::sqrt(2.0L * std::log(10.0L));
  const long double alpha =
      2.0L * 10.0L * 0.5L * std::erfc(t / std::sqrt(2.0L)) + 2.0L * (1.0L + t) * (1.0L + t) / (1e3L * 1e3L);
  CHECK(rr.alpha == doctest::Approx(static_cast<double>(alpha)).epsilon(1e-12));
  CHECK(rr.side_condition_ok == (10.0 <= std::exp(100.0 / 8.0)));

  RateConfig missing;
  missing.mode = RateMode::full;
  CHECK_THROWS_AS(rate_r(10, 5.0, missing), ConfigError);
}
