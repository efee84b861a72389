#include "stiv/errors.hpp"
#include "stiv/inference.hpp"

#include <doctest.h>

#include <random>

using namespace stiv;

namespace {

StivFit fake_fit(VectorXd beta, double sigma) {
  StivFit f;
  f.beta = std::move(beta);
  f.sigma = sigma;
  return f;
}

ScaledDesign fake_design(const MatrixXd& Psi, VectorXd x_star) {
  ScaledDesign sd;
  sd.Psi = Psi;
  sd.x_star = std::move(x_star);
  sd.z_star = VectorXd::Ones(Psi.rows());
  return sd;
}

CertifiedSensitivities fake_sens(VectorXd coord, double endo, double exo, double k1 = 1.0) {
  CertifiedSensitivities s;
  s.source = SensitivitySource::certificate(1);
  s.coord = std::move(coord);
  s.block_endo = endo;
  s.block_exo = exo;
  s.kappa1 = k1;
  return s;
}

MatrixXd random_psi(std::mt19937_64& rng, int L, int K) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd P(L, K);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < K; ++j) P(i, j) = u(rng);
  // a dominant diagonal keeps the sensitivities away from zero
  for (int j = 0; j < std::min(L, K); ++j) P(j, j) = 1.0;
  return P;
}

} // namespace

TEST_CASE("slack factor conventions") {
  CHECK(slack_factor(0.1, 1.0, 0.1) == doctest::Approx(1.25));
  CHECK(slack_factor(0.1, kInfinity, kInfinity) == 1.0);
  CHECK(std::isinf(slack_factor(0.5, 0.5, kInfinity)));
  CHECK(std::isinf(slack_factor(0.1, 0.0, 1.0)));
  CHECK(slack_factor(0.0, 0.0, 0.0) == 1.0);
}

TEST_CASE("half-width by hand") {
  // 2 * 0.3 * 0.1 / 0.5 * (1 / 0.8)
  StivFit f = fake_fit(VectorXd::Constant(1, 2.0), 0.3);
  ScaledDesign sd = fake_design(MatrixXd::Identity(1, 1), VectorXd::Ones(1));
  auto rep = confidence_intervals(f, sd, fake_sens(VectorXd::Constant(1, 0.5), 1.0, 0.1), 0.1);
  CHECK(rep.half_width(0) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(rep.slack == doctest::Approx(1.25));
  CHECK(rep.lower(0) == doctest::Approx(1.85));
  CHECK(rep.upper(0) == doctest::Approx(2.15));
  CHECK(rep.finite[0]);
  // x_k* divides the width
  ScaledDesign sd2 = fake_design(MatrixXd::Identity(1, 1), VectorXd::Constant(1, 3.0));
  CHECK(confidence_intervals(f, sd2, fake_sens(VectorXd::Constant(1, 0.5), 1.0, 0.1), 0.1).half_width(0) ==
        doctest::Approx(0.05));
}

TEST_CASE("weak identification gives infinite intervals") {
  StivFit f = fake_fit(VectorXd::Zero(3), 0.3);
  ScaledDesign sd = fake_design(MatrixXd::Identity(3, 3), VectorXd::Ones(3));
  auto rep = confidence_intervals(f, sd, fake_sens(VectorXd::Constant(3, 0.2), 0.4, 1.0), 0.47);
  for (Index k = 0; k < 3; ++k) {
    CHECK(std::isinf(rep.half_width(k)));
    CHECK_FALSE(rep.finite[static_cast<size_t>(k)]);
  }
  VectorXd om = thresholds(f, sd, fake_sens(VectorXd::Constant(3, 0.2), 0.4, 1.0), 0.47);
  CHECK(threshold_select(VectorXd::Constant(3, 100.0), om).support.empty());
}

TEST_CASE("thresholds share the interval formula") {
  StivFit f = fake_fit(VectorXd::Zero(2), 0.4);
  ScaledDesign sd = fake_design(MatrixXd::Identity(2, 2), VectorXd::Constant(2, 2.0));
  auto sens = fake_sens((VectorXd(2) << 0.5, 0.8).finished(), 2.0, 1.5);
  auto ci = confidence_intervals(f, sd, sens, 0.1);
  VectorXd om = thresholds(f, sd, sens, 0.1);
  CHECK((om - ci.half_width).cwiseAbs().maxCoeff() == 0.0);
  sens.source = SensitivitySource::direct({0});
  CHECK_THROWS_AS(thresholds(f, sd, sens, 0.1), ConfigError);
  StivFit np;
  np.beta = VectorXd::Zero(2);
  CHECK_THROWS_AS(confidence_intervals(np, sd, sens, 0.1), ConfigError);
}

TEST_CASE("widths move the right way under perturbation") {
  const VectorXd xs = VectorXd::Ones(2);
  const VectorXd kap = (VectorXd(2) << 0.5, 0.7).finished();
  const double s = slack_factor(0.1, 1.0, 1.0);
  const VectorXd base = bound_widths(0.3, 0.1, xs, kap, s);
  CHECK((bound_widths(0.3, 0.1, xs, kap * 1.1, s).array() < base.array()).all());
  CHECK((bound_widths(0.35, 0.1, xs, kap, s).array() > base.array()).all());
  CHECK((bound_widths(0.3, 0.11, xs, kap, slack_factor(0.11, 1.0, 1.0)).array() > base.array()).all());
  CHECK(slack_factor(0.1, 1.2, 1.0) < s);
}

TEST_CASE("selection by threshold") {
  Selection s = threshold_select((VectorXd(2) << 1.0, 0.01).finished(), VectorXd::Constant(2, 0.5));
  CHECK(s.support == IndexSet{0});
  CHECK(s.signs(0) == 1);
  CHECK(s.signs(1) == 0);
  Selection neg = threshold_select((VectorXd(3) << -2.0, 0.4, 0.6).finished(), VectorXd::Constant(3, 0.5));
  CHECK(neg.support == IndexSet{0, 2});
  CHECK(neg.signs(0) == -1);
  CHECK(threshold_select(VectorXd::Constant(2, 0.3), VectorXd::Constant(2, 0.5)).support.empty());
  CHECK_THROWS_AS(threshold_select(VectorXd::Zero(2), VectorXd::Zero(3)), DimensionError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 50; ++rep) {
    VectorXd b(6), w(6);
    for (int k = 0; k < 6; ++k) {
      b(k) = g(rng);
      w(k) = std::abs(g(rng));
    }
    auto h = [](double x) { return std::exp(3.0 * x) - 1.0; }; // increasing on [0, inf)
    VectorXd b2(6), w2(6);
    for (int k = 0; k < 6; ++k) {
      b2(k) = (b(k) > 0 ? 1.0 : -1.0) * h(std::abs(b(k)));
      w2(k) = h(w(k));
    }
    Selection a = threshold_select(b, w), c = threshold_select(b2, w2);
    CHECK(a.support == c.support);
    CHECK(a.signs == c.signs);
  }
}

TEST_CASE("estimated support uses a floor") {
  CHECK(estimated_support((VectorXd(4) << 1e-9, -0.2, 0.0, 2e-8).finished()) == IndexSet{1, 3});
  CHECK(estimated_support(VectorXd::Zero(3)).empty());
}

TEST_CASE("certificate intervals are wider than direct ones, and nested sets order the widths") {
  std::mt19937_64 rng(5);
  const ConeSpec cone{0.1, false};
  for (int rep = 0; rep < 6; ++rep) {
    MatrixXd P = random_psi(rng, 5, 4);
    ScaledDesign sd = fake_design(P, VectorXd::Ones(4));
    StivFit f = fake_fit(VectorXd::Zero(4), 0.2);
    CiSpec spec;
    spec.r = 0.02;
    spec.J_end = {0};
    spec.source = SensitivitySource::direct({0, 2});
    auto direct = confidence_intervals(f, sd, spec);
    spec.source = SensitivitySource::certificate(2);
    auto cert = confidence_intervals(f, sd, spec);
    for (Index k = 0; k < 4; ++k) CHECK(cert.half_width(k) >= direct.half_width(k) - 1e-9);

    spec.source = SensitivitySource::direct({0});
    auto small = confidence_intervals(f, sd, spec);
    spec.source = SensitivitySource::direct({0, 1, 2});
    auto large = confidence_intervals(f, sd, spec);
    for (Index k = 0; k < 4; ++k) CHECK(large.half_width(k) >= small.half_width(k) - 1e-9);
  }
  CiSpec bad;
  bad.r = 0.1;
  bad.source = SensitivitySource::direct({});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("approximate sparsity bound") {
  std::mt19937_64 rng(9);
  MatrixXd P = random_psi(rng, 5, 4);
  ScaledDesign sd = fake_design(P, (VectorXd(4) << 1.0, 2.0, 0.5, 1.0).finished());
  ApproxSparseInput in;
  in.sigma = 0.3;
  in.r = 0.02;
  in.p = 1.0;
  in.J_end = {0};
  in.beta_ref = (VectorXd(4) << 1.0, 0.3, 0.05, 0.01).finished();

  auto all = all_subsets(4);
  auto res = approx_sparse_bound(sd, all, in);
  REQUIRE(res.candidate_values.size() == all.size());
  for (double v : res.candidate_values) CHECK(res.value <= v);
  CHECK(res.value == res.candidate_values[static_cast<size_t>(res.argmin_index)]);
  CHECK(res.argmin == all[static_cast<size_t>(res.argmin_index)]);

  // full set: no bias, the variance term alone
  auto full = approx_sparse_bound(sd, {{0, 1, 2, 3}}, in);
  const ConeSpec tilde{0.1, true};
  const double kp = kappa_lp_norm_bounds(P, 1.0, SensitivitySource::direct({0, 1, 2, 3}), tilde).value;
  const double slack = slack_factor(0.02, kappa_block(P, {0}, {0, 1, 2, 3}, tilde).value,
                                    kappa_block(P, {1, 2, 3}, {0, 1, 2, 3}, tilde).value);
  CHECK(full.value == doctest::Approx(2.0 * 0.3 * 0.02 / kp * slack).epsilon(1e-12));

  // empty set: the bias term 6 |D_X^{-1} beta|_1 / (1 - c)
  auto empty = approx_sparse_bound(sd, {{}}, in);
  CHECK(empty.value == doctest::Approx(6.0 * (1.0 + 0.6 + 0.025 + 0.01) / 0.9).epsilon(1e-12));

  auto pre = magnitude_prefixes(sd, in.beta_ref);
  CHECK(pre.size() == 5);
  CHECK(pre[1] == IndexSet{0});
  CHECK(pre[2] == IndexSet{0, 1});
  CHECK_THROWS_AS(all_subsets(16), ConfigError);
  CHECK_THROWS_AS(approx_sparse_bound(sd, {}, in), ConfigError);

  SensitivityOptions tight;
  tight.enumeration_cap = 0;
  CHECK_THROWS_AS(approx_sparse_bound(sd, {{0, 1}}, in, tight), ConfigError);
}
