#include "oracles.hpp"
#include "stiv/errors.hpp"
#include "stiv/estimator.hpp"
#include "stiv/sim.hpp"

#include <doctest.h>

#include <random>

using namespace stiv;

namespace {

// Smallest feasible sigma for a given beta, and the matching objective.
double sigma_min(const Dataset& d, const ScaledDesign& sd, const VectorXd& beta, double r) {
  const VectorXd res = d.y() - d.X() * beta;
  const double q = std::sqrt(res.squaredNorm() / static_cast<double>(d.n()));
  const double g = scaled_moments(d, sd, res).cwiseAbs().maxCoeff();
  return std::max(q, g / r);
}

double objective_at(const Dataset& d, const ScaledDesign& sd, const VectorXd& beta, double r, double c) {
  return scaled_l1(sd, beta) + c * sigma_min(d, sd, beta, r);
}

Dataset random_dataset(std::mt19937_64& rng, Index n, Index K, Index L, Index n_endo = 1) {
  std::normal_distribution<double> g;
  MatrixXd Z(n, L), X(n, K);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index l = 0; l < L; ++l) Z(i, l) = g(rng);
    const double u = g(rng);
    for (Index k = 0; k < K; ++k)
      X(i, k) = k < n_endo ? Z.row(i).head(L - K + 1).sum() * 0.5 + 0.5 * u + g(rng) * 0.3
                           : Z(i, L - K + k);
    y(i) = X(i, 0) + 0.5 * u;
    if (K > 1) y(i) -= 0.7 * X(i, K - 1);
  }
  IndexSet endo;
  for (Index k = 0; k < n_endo; ++k) endo.push_back(static_cast<int>(k));
  return Dataset(y, X, Z, endo);
}

StivConfig config(double r, double c = 0.1) {
  StivConfig cfg;
  cfg.r = r;
  cfg.c = c;
  return cfg;
}

void check_feasible(const Dataset& d, const ScaledDesign& sd, const StivFit& f, double tol) {
  REQUIRE(f.sigma);
  const VectorXd res = d.y() - d.X() * f.beta;
  CHECK(scaled_moments(d, sd, res).cwiseAbs().maxCoeff() <= *f.sigma * f.r + tol);
  CHECK(std::sqrt(res.squaredNorm() / static_cast<double>(d.n())) <= *f.sigma + tol);
}

} // namespace

TEST_CASE("zero outcome gives the zero fit") {
  std::mt19937_64 rng(1);
  Dataset d = random_dataset(rng, 20, 3, 5).with_y(VectorXd::Zero(20));
  ScaledDesign sd = scale_design(d);
  StivFit f = stiv_fit(d, sd, config(0.3));
  CHECK(f.beta.cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(std::abs(*f.sigma) <= 1e-7);
  CHECK(std::abs(f.objective) <= 1e-7);
  StivFit np = stiv_nonpivotal(d, sd, 1.0, 0.3);
  CHECK(np.beta.cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(!np.sigma);
}

TEST_CASE("scalar instance matches a one-dimensional oracle") {
  MatrixXd one = MatrixXd::Ones(3, 1);
  Dataset d(VectorXd::Ones(3), one, one, {0});
  ScaledDesign sd = scale_design(d);
  StivFit f = stiv_fit(d, sd, config(0.5));
  // f(b) = |b| + 0.1 * 2|1 - b|, minimised at b = 0 with value 0.2
  auto obj = [&](double b) { return objective_at(d, sd, VectorXd::Constant(1, b), 0.5, 0.1); };
  const double grid = oracle::grid_min_1d(obj, -1.0, 3.0, 40000);
  CHECK(f.objective == doctest::Approx(grid).epsilon(1e-4));
  CHECK(f.objective == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(std::abs(f.beta(0)) <= 1e-6);
  // with a small c the fit moves to b = 1 as soon as c / r > 1
  StivFit g = stiv_fit(d, sd, config(0.05));
  CHECK(g.beta(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single-regressor fits match golden-section oracles") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 15; ++rep) {
    Dataset d = random_dataset(rng, 25, 1, 3);
    ScaledDesign sd = scale_design(d);
    const double r = 0.2;
    StivFit f = stiv_fit(d, sd, config(r));
    auto obj = [&](double b) { return objective_at(d, sd, VectorXd::Constant(1, b), r, 0.1); };
    const double ref = std::min(oracle::golden_min(obj, -10.0, 10.0), obj(0.0));
    CHECK(f.objective == doctest::Approx(ref).epsilon(1e-6).scale(1.0));
    check_feasible(d, sd, f, 1e-7);

    const double sstar = 0.8;
    StivFit np = stiv_nonpivotal(d, sd, sstar, r);
    // feasible set in b is an interval; the oracle scans it on a fine grid
    auto pen = [&](double b) {
      const VectorXd res = d.y() - d.X().col(0) * b;
      const double g = scaled_moments(d, sd, res).cwiseAbs().maxCoeff();
      return g <= sstar * r ? std::abs(b) * sd.x_star(0) : 1e300;
    };
    const double gref = oracle::grid_min_1d(pen, -5.0, 5.0, 200000);
    CHECK(scaled_l1(sd, np.beta) == doctest::Approx(gref).epsilon(1e-4).scale(1.0));
    CHECK(scaled_l1(sd, np.beta) <= gref + 1e-7);
  }
}

TEST_CASE("fits are feasible and locally optimal") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    Dataset d = random_dataset(rng, 30, 4, 6);
    ScaledDesign sd = scale_design(d);
    const double r = 0.25;
    StivFit f = stiv_fit(d, sd, config(r));
    check_feasible(d, sd, f, 1e-7);
    CHECK(f.iv_residual <= 1e-7);
    CHECK(f.q_residual <= 1e-7);
    const double base = objective_at(d, sd, f.beta, r, 0.1);
    CHECK(base == doctest::Approx(f.objective).epsilon(1e-6));
    for (Index k = 0; k < 4; ++k)
      for (double eps : {-1e-3, 1e-3, -0.1, 0.1}) {
        VectorXd b = f.beta;
        b(k) += eps;
        CHECK(objective_at(d, sd, b, r, 0.1) >= base - 10 * 1e-8);
      }
  }
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(13);
  Dataset d = random_dataset(rng, 30, 3, 5);
  ScaledDesign sd = scale_design(d);
  StivFit f = stiv_fit(d, sd, config(0.25));
  MatrixXd X2 = d.X(), Z2 = d.Z();
  const double gamma = 4.0;
  X2.col(0) *= gamma;
  X2.col(2) *= gamma;
  Z2.col(4) *= gamma; // the instrument copy of x3 scales with it
  Dataset d2(d.y(), X2, Z2, d.endo());
  ScaledDesign sd2 = scale_design(d2);
  StivFit f2 = stiv_fit(d2, sd2, config(0.25));
  CHECK(f2.objective == doctest::Approx(f.objective).epsilon(1e-6));
  CHECK(*f2.sigma == doctest::Approx(*f.sigma).epsilon(1e-5));
  CHECK(scaled_l1(sd2, f2.beta) == doctest::Approx(scaled_l1(sd, f.beta)).epsilon(1e-5).scale(1.0));
}

TEST_CASE("nonpivotal variant") {
  std::mt19937_64 rng(17);
  Dataset d = random_dataset(rng, 30, 3, 5);
  ScaledDesign sd = scale_design(d);
  const double r = 0.2;
  const double g0 = scaled_moments(d, sd, d.y()).cwiseAbs().maxCoeff();
  CHECK(stiv_nonpivotal(d, sd, 1.01 * g0 / r, r).beta.cwiseAbs().maxCoeff() <= 1e-7);
  double prev = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(stiv_nonpivotal(d, sd, 1e-4, r), ConfigError);
  for (double s : {0.5, 1.0, 2.0, 4.0}) {
    const double v = scaled_l1(sd, stiv_nonpivotal(d, sd, s, r).beta);
    CHECK(v <= prev + 1e-7);
    prev = v;
  }
  CHECK_THROWS_AS(stiv_nonpivotal(d, sd, 0.0, r), ConfigError);
}

TEST_CASE("square-root lasso") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g;
  MatrixXd Z(40, 1);
  VectorXd t(40);
  for (Index i = 0; i < 40; ++i) {
    Z(i, 0) = g(rng);
    t(i) = 0.8 * Z(i, 0) + g(rng);
  }
  SqrtLassoConfig cfg;
  CHECK(sqrt_lasso(VectorXd::Zero(40), Z, cfg).cwiseAbs().maxCoeff() <= 1e-8);
  const double s = std::sqrt(Z.col(0).squaredNorm() / 40.0);
  const double lambda = cfg.c_sql * std::sqrt(40.0) * normal_quantile(1.0 - 0.05 / 2.0);
  auto obj = [&](double z) {
    return std::sqrt((t - Z.col(0) * z).squaredNorm() / 40.0) + lambda / 40.0 * s * std::abs(z);
  };
  const double zs = sqrt_lasso(t, Z, cfg)(0);
  const double ref = std::min(oracle::golden_min(obj, -5.0, 5.0), obj(0.0));
  CHECK(obj(zs) == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("projection instruments") {
  std::mt19937_64 rng(23);
  Dataset d = random_dataset(rng, 20, 3, 5);
  VectorXd e1 = VectorXd::Zero(5);
  e1(0) = 1.0;
  Dataset p = projection_instruments(d, {e1});
  CHECK(p.L() == 3);
  CHECK(p.Z().col(0) == d.Z().col(0));
  CHECK(p.Z().col(1) == d.X().col(1));
  CHECK_THROWS_AS(projection_instruments(d, {VectorXd::Zero(5)}), DegenerateError);
  CHECK_THROWS_AS(projection_instruments(d, {}), DimensionError);
}

TEST_CASE("two-stage without endogenous regressors equals the plain fit on X") {
  std::mt19937_64 rng(29);
  Dataset d0 = random_dataset(rng, 30, 3, 5, 0);
  TwoStageFit ts = stiv_two_stage(d0, config(0.0), {}, {});
  CHECK(ts.projected.L() == 3);
  CHECK(ts.projected.Z() == d0.X());
  Dataset direct(d0.y(), d0.X(), d0.X(), {});
  ScaledDesign sd = scale_design(direct);
  StivFit f = stiv_fit(direct, sd, config(rate_r(30, 3.0, {}).r));
  CHECK(ts.fit.objective == doctest::Approx(f.objective).epsilon(1e-9));
  CHECK(ts.rate.r == doctest::Approx(rate_r(30, 3.0, {}).r));
}

TEST_CASE("noise-free design is recovered exactly") {
  DgpParams p;
  p.n = 2000;
  p.K = 1;
  p.L = 2;
  p.sigma_struct = 0.0;
  p.sigma_end = 0.0;
  p.beta_star = VectorXd::Ones(1);
  p.zeta = VectorXd::Zero(2);
  p.zeta(0) = 1.0;
  p.instruments = InstrumentLaw::rademacher;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    p.seed = seed;
    Dataset d = generate_dgp(p);
    ScaledDesign sd = scale_design(d);
    StivFit f = stiv_fit(d, sd, config(rate_r(2000, 2.0, {}).r));
    CHECK((f.beta - p.beta_star).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(*f.sigma <= 1e-6);
  }
}
