#include "stiv/nonvalid.hpp"

#include "stiv/errors.hpp"

#include <cmath>
#include <sstream>

namespace stiv {

void NvConfig::validate() const {
  if (!(c > 0.0 && c < 1.0)) throw ConfigError("nv: c must lie in (0, 1)");
  if (!(r1 > 0.0) || !std::isfinite(r1)) throw ConfigError("nv: r1 must be positive and finite");
  if (!(b_hat >= 0.0)) throw ConfigError("nv: b_hat must be nonnegative");
}

NvMoments nv_moments(const Dataset& d, const VectorXd& beta) {
  if (!d.has_zbar()) throw ConfigError("nv: dataset has no suspect instruments (zbar columns)");
  if (beta.size() != d.K()) throw DimensionError("nv: pilot beta length differs from K");
  const double n = static_cast<double>(d.n());
  const VectorXd u = d.y() - d.X() * beta;
  const MatrixXd& Zb = d.zbar();
  NvMoments mo;
  mo.m = Zb.transpose() * u / n;
  mo.v.resize(Zb.cols());
  for (Index l = 0; l < Zb.cols(); ++l) {
    // centred second moment, so v_l >= 0 without cancellation
    const VectorXd w = Zb.col(l).cwiseProduct(u);
    mo.v(l) = (w.array() - mo.m(l)).square().sum() / n;
  }
  mo.zbar_star = std::sqrt((Zb.array().square().colwise().sum() / n).maxCoeff());
  return mo;
}

double nv_q(const Dataset& d, const VectorXd& beta, int l, double theta_l) {
  const VectorXd u = d.y() - d.X() * beta;
  const VectorXd w = d.zbar().col(l).cwiseProduct(u);
  return (w.array() - theta_l).square().mean();
}

NvFit nv_fit(const Dataset& d, const VectorXd& beta_hat, const NvConfig& cfg) {
  cfg.validate();
  NvFit f;
  f.moments = nv_moments(d, beta_hat);
  const NvMoments& mo = f.moments;
  const Index L1 = mo.m.size();
  f.budget = cfg.b_hat * mo.zbar_star;
  if (std::isinf(f.budget)) {
    // every constraint is slack for sigma1 = 0
    f.theta = VectorXd::Zero(L1);
    f.sigma1 = 0.0;
    f.solve.status = conic::SolveStatus::optimal;
    f.solve.objective = f.solve.dual_objective = 0.0;
    f.solve.residual = f.solve.gap = 0.0;
    return f;
  }
  const double B = f.budget;
  // variables: theta (L1), sigma1, w (L1)
  const Index nv = 2 * L1 + 1, s = L1;
  conic::ConicProgram p(nv);
  p.lp.objective.tail(L1).setOnes();
  p.lp.objective(s) = cfg.c;
  p.lp.lower(s) = 0.0;
  for (Index l = 0; l < L1; ++l) {
    VectorXd row = VectorXd::Zero(nv);
    row(l) = 1.0;
    row(L1 + 1 + l) = -1.0;
    p.lp.add_inequality(row, 0.0);
    row(l) = -1.0;
    p.lp.add_inequality(row, 0.0);
    // |m_l - theta_l| <= sigma1 r1 + B
    row.setZero();
    row(l) = -1.0;
    row(s) = -cfg.r1;
    p.lp.add_inequality(row, B - mo.m(l));
    row(l) = 1.0;
    p.lp.add_inequality(row, B + mo.m(l));
    // (sigma1 + B, sqrt(v_l), theta_l - m_l) in Q^3
    conic::SecondOrderCone k;
    k.M = MatrixXd::Zero(3, nv);
    k.q = VectorXd::Zero(3);
    k.M(0, s) = 1.0;
    k.q(0) = B;
    k.q(1) = std::sqrt(mo.v(l));
    k.M(2, l) = 1.0;
    k.q(2) = -mo.m(l);
    p.cones.push_back(std::move(k));
  }
  f.solve = conic::solve_socp(p, cfg.tol);
  if (!f.solve.optimal()) {
    std::ostringstream m;
    m << "STIV-NV solve ended with status " << conic::to_string(f.solve.status) << " after "
      << f.solve.iterations << " iterations";
    throw SolverError(m.str());
  }
  f.theta = f.solve.x.head(L1);
  f.sigma1 = std::max(0.0, f.solve.x(s));
  f.iv_residual = std::max(0.0, (mo.m - f.theta).cwiseAbs().maxCoeff() - f.sigma1 * cfg.r1 - B);
  double fmax = 0.0;
  for (Index l = 0; l < L1; ++l)
    fmax = std::max(fmax, std::sqrt(mo.v(l) + std::pow(f.theta(l) - mo.m(l), 2)));
  f.f_residual = std::max(0.0, fmax - f.sigma1 - B);
  return f;
}

double nv_bound_V(double sigma1, double b, double j, double r1, double c, double zbar_star) {
  const double denom = 1.0 - 2.0 * r1 / (1.0 - c) * j;
  if (!(denom > 0.0) || std::isinf(b)) return kInfinity;
  return 2.0 * (sigma1 * r1 + (1.0 + r1 / (1.0 - c)) * b * zbar_star) / denom;
}

double nv_bound_l1(double sigma1, double b, double j, double r1, double c, double zbar_star) {
  const double denom = 1.0 - c - 2.0 * r1 * j;
  if (!(denom > 0.0) || std::isinf(b)) return kInfinity;
  return 2.0 * (2.0 * j * (sigma1 * r1 + (1.0 + r1) * b * zbar_star) + c * b * zbar_star) / denom;
}

double nv_bhat_from_stiv(const StivFit& fit, int s, double r, const CertifiedSensitivities& sens) {
  if (!fit.sigma) throw ConfigError("b_hat needs a pivotal pilot fit");
  if (s < 1) throw ConfigError("sparsity certificate needs s >= 1");
  const double slack = slack_factor(r, sens.block_endo, sens.block_exo);
  if (std::isinf(slack) || sens.kappa1 == 0.0) return kInfinity;
  if (std::isinf(sens.kappa1)) return 0.0;
  return 2.0 * *fit.sigma * r * s / sens.kappa1 * slack;
}

NvSelection nv_threshold_select(const NvFit& fit, const NvConfig& cfg, std::optional<int> s1,
                                double support_floor) {
  NvSelection out;
  const VectorXd& th = fit.theta;
  auto select = [&](int j) {
    out.s1 = j;
    out.omega = nv_bound_V(fit.sigma1, cfg.b_hat, j, cfg.r1, cfg.c, fit.moments.zbar_star);
    out.selection = threshold_select(th, VectorXd::Constant(th.size(), out.omega));
    ++out.rounds;
  };
  if (s1) {
    if (*s1 < 0) throw ConfigError("s1 must be nonnegative");
    select(*s1);
    return out;
  }
  int j = static_cast<int>(estimated_support(th, support_floor).size());
  for (int round = 0; round < 3; ++round) {
    select(j);
    const int next = static_cast<int>(out.selection.support.size());
    if (next == j) break;
    j = next;
  }
  return out;
}

namespace {

NvPipelineResult nv_finish(const Dataset& d, const NvPipelineConfig& cfg, const ScaledDesign& sd,
                           NvPipelineResult res) {
  if (res.pilot.beta.size() != d.K()) throw DimensionError("nv: pilot beta length differs from K");
  res.sens = certify(sd.Psi, d.endo(), SensitivitySource::certificate(cfg.s), ConeSpec{cfg.c, false},
                     cfg.sens, cfg.variant);
  res.b_hat = cfg.b_hat ? *cfg.b_hat : nv_bhat_from_stiv(res.pilot, cfg.s, res.r, res.sens);
  NvConfig nc;
  nc.c = cfg.c_nv;
  nc.r1 = res.r1;
  nc.b_hat = res.b_hat;
  nc.tol = cfg.tol;
  res.fit = nv_fit(d, res.pilot.beta, nc);
  res.selection = nv_threshold_select(res.fit, nc, cfg.s1);
  return res;
}

NvPipelineResult nv_start(const Dataset& d, const NvPipelineConfig& cfg) {
  if (!d.has_zbar()) throw ConfigError("nv: dataset has no suspect instruments (zbar columns)");
  NvPipelineResult res;
  res.r = rate_r(d.n(), static_cast<double>(d.L()), cfg.rate).r;
  res.r1 = rate_r(d.n(), static_cast<double>(d.L1()), cfg.rate1 ? *cfg.rate1 : cfg.rate).r;
  return res;
}

} // namespace

NvPipelineResult nv_pipeline(const Dataset& d, const NvPipelineConfig& cfg) {
  NvPipelineResult res = nv_start(d, cfg);
  const ScaledDesign sd = scale_design(d);
  StivConfig sc;
  sc.c = cfg.c;
  sc.r = res.r;
  sc.tol = cfg.tol;
  res.pilot = stiv_fit(d, sd, sc);
  return nv_finish(d, cfg, sd, std::move(res));
}

NvPipelineResult nv_pipeline(const Dataset& d, const NvPipelineConfig& cfg, StivFit pilot) {
  NvPipelineResult res = nv_start(d, cfg);
  res.pilot = std::move(pilot);
  return nv_finish(d, cfg, scale_design(d), std::move(res));
}

} // namespace stiv
