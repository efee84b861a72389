#include "stiv/errors.hpp"
#include "stiv/presets.hpp"
#include "stiv/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace stiv;

namespace {

Replication mean_of_y(const Dataset& d, std::uint64_t) {
  Replication r;
  r.beta = VectorXd::Constant(1, d.y().mean());
  r.sigma = d.y().norm();
  r.support_exact = d.y()(0) > 0.0;
  return r;
}

} // namespace

TEST_CASE("type 7 percentiles") {
  CHECK(percentile({1, 2, 3, 4}, 0.3) == doctest::Approx(1.9));
  CHECK(percentile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(percentile(ten, 0.05) == doctest::Approx(1.45));
  CHECK(percentile(ten, 0.95) == doctest::Approx(9.55));
  CHECK(percentile({7}, 0.95) == 7.0);
  CHECK_THROWS_AS(percentile({}, 0.5), ConfigError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(percentile({inf, inf, inf}, 0.5) == inf);
  CHECK(percentile({1, inf}, 0.5) == inf);
  CHECK(percentile({1, 2, inf}, 0.25) == doctest::Approx(1.5));
  CHECK(percentile({-inf, 0}, 0.5) == -inf);
  CHECK_THROWS_AS(percentile({1, std::nan("")}, 0.5), ConfigError);
}

TEST_CASE("the generator is deterministic per seed") {
  DgpParams p = DgpParams::paper();
  p.seed = 42;
  Dataset a = generate_dgp(p), b = generate_dgp(p);
  CHECK(a.X() == b.X());
  CHECK(a.Z() == b.Z());
  CHECK(a.y() == b.y());
  p.seed = 43;
  CHECK(generate_dgp(p).y() != a.y());
  CHECK(a.endo() == IndexSet{0});
  CHECK(a.n() == 49);
  CHECK(a.K() == 25);
  CHECK(a.L() == 50);
}

TEST_CASE("noise-free design satisfies the structural equation exactly") {
  DgpParams p = DgpParams::paper(30, 5, 8);
  p.sigma_struct = p.sigma_end = 0.0;
  Dataset d = generate_dgp(p);
  CHECK(d.y() == d.X() * p.beta_star);
  CHECK(d.X().col(0) == d.Z().leftCols(4) * p.zeta);
}

TEST_CASE("large-sample moments") {
  DgpParams p = DgpParams::paper(200000, 2, 3);
  p.seed = 5;
  p.theta_star = (VectorXd(2) << 0.2, 0.0).finished();
  Dataset d = generate_dgp(p);
  const double n = static_cast<double>(d.n());
  const VectorXd u = d.y() - d.X() * p.beta_star;
  const VectorXd v = d.X().col(0) - d.Z().leftCols(2) * p.zeta;
  CHECK(std::abs(v.dot(u) / n - p.rho * p.sigma_struct * p.sigma_end) <= 0.01);
  CHECK(std::abs(u.squaredNorm() / n - p.sigma_struct * p.sigma_struct) <= 0.01);
  for (Index l = 0; l < d.L(); ++l) CHECK(std::abs(d.Z().col(l).dot(u) / n) <= 0.01);
  CHECK(std::abs(d.zbar().col(0).dot(u) / n - 0.2) <= 0.01);
  CHECK(std::abs(d.zbar().col(1).dot(u) / n) <= 0.01);

  DgpParams r = p;
  r.n = 1000;
  r.instruments = InstrumentLaw::rademacher;
  Dataset e = generate_dgp(r);
  CHECK((e.Z().array().abs() == 1.0).all());
}

TEST_CASE("parameter validation") {
  DgpParams p = DgpParams::paper();
  p.rho = 1.0;
  CHECK_THROWS_AS(generate_dgp(p), ConfigError);
  p = DgpParams::paper();
  p.zeta = VectorXd::Ones(3);
  CHECK_THROWS_AS(generate_dgp(p), ConfigError);
  p = DgpParams::paper(20, 2, 3);
  p.sigma_struct = 0.0;
  p.theta_star = VectorXd::Constant(1, 0.5);
  CHECK_THROWS_AS(generate_dgp(p), ConfigError);
}

TEST_CASE("Monte Carlo is independent of threads and replication order") {
  DgpParams p = DgpParams::paper(20, 3, 5);
  McSummary one = monte_carlo(p, mean_of_y, 12, 100, 1);
  McSummary many = monte_carlo(p, mean_of_y, 12, 100, 4);
  CHECK(one.beta_pct == many.beta_pct);
  CHECK(*one.sigma_pct == *many.sigma_pct);
  CHECK(*one.support_recovery == *many.support_recovery);
  // replication i depends on base_seed + i only
  McSummary tail = monte_carlo(p, mean_of_y, 4, 108, 1);
  for (size_t i = 0; i < 4; ++i) CHECK(tail.runs[i].beta == one.runs[8 + i].beta);
  CHECK(one.beta_pct(0, 0) <= one.beta_pct(0, 1));
  CHECK(one.beta_pct(0, 1) <= one.beta_pct(0, 2));

  McSummary single = monte_carlo(p, mean_of_y, 1, 7, 1);
  CHECK(single.beta_pct(0, 0) == single.beta_pct(0, 2));
  CHECK((*single.sigma_pct)(0) == (*single.sigma_pct)(1));
  CHECK_THROWS_AS(monte_carlo(p, mean_of_y, 0, 7, 1), ConfigError);
}

TEST_CASE("failed replications are recorded, and too many abort") {
  DgpParams p = DgpParams::paper(20, 3, 5);
  auto flaky = [](const Dataset& d, std::uint64_t seed) {
    if (seed == 150) throw SolverError("synthetic failure");
    return mean_of_y(d, seed);
  };
  McSummary s = monte_carlo(p, flaky, 200, 0, 1);
  CHECK(s.failures == 1);
  CHECK(s.runs.size() == 199);
  CHECK(s.errors.front().find("seed 150") != std::string::npos);
  CHECK_THROWS_AS(monte_carlo(p, flaky, 50, 140, 1), SolverError);
}

TEST_CASE("presets") {
  CHECK(preset_names().size() == 5);
  for (const auto& n : preset_names()) {
    Preset p = make_preset(n);
    CHECK(p.name == n);
    CHECK(p.default_reps > 0);
    CHECK(static_cast<bool>(p.run));
  }
  CHECK_THROWS_AS(make_preset("table9"), ConfigError);
  CHECK(make_preset("table3").dgp.n == 49);
  CHECK(make_preset("table5").dgp.n == 8000);

  // a cheap end-to-end run on the smallest preset
  Preset t4 = make_preset("table4");
  McSummary s = monte_carlo(t4.dgp, t4.run, 2, 1, 1);
  CHECK(s.runs.size() == 2);
  CHECK(!s.sigma_pct);
}
