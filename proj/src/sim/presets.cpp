#include "stiv/presets.hpp"

#include "stiv/errors.hpp"

#include <cmath>

namespace stiv {

namespace {

StivConfig pivotal(const PipelineSettings& st, double r) {
  StivConfig cfg;
  cfg.c = st.c;
  cfg.r = r;
  cfg.tol = st.tol;
  return cfg;
}

ThresholdRun finish(StivFit fit, const ScaledDesign& sd, const IndexSet& endo, double r,
                    const PipelineSettings& st) {
  ThresholdRun out;
  out.fit = std::move(fit);
  out.r = r;
  out.sens = certify(sd.Psi, endo, SensitivitySource::certificate(st.s), ConeSpec{st.c, false}, st.sens);
  out.ci = confidence_intervals(out.fit, sd, out.sens, r);
  out.selection = threshold_select(out.fit.beta, thresholds(out.fit, sd, out.sens, r));
  return out;
}

Replication from_threshold_run(const ThresholdRun& t, const VectorXd& beta_star) {
  Replication rep;
  rep.beta = t.fit.beta;
  rep.sigma = t.fit.sigma;
  rep.support_exact = t.selection.support == estimated_support(beta_star, 0.0);
  bool covered = true;
  for (Index k = 0; k < beta_star.size(); ++k)
    covered = covered && t.ci.lower(k) <= beta_star(k) && beta_star(k) <= t.ci.upper(k);
  rep.covered = covered;
  // under a certificate source the half-width of coordinate k is omega_k
  rep.extra = {t.ci.half_width(0), static_cast<double>(t.selection.support.size()),
               t.ci.half_width.maxCoeff()};
  return rep;
}

} // namespace

ThresholdRun threshold_run(const Dataset& d, const PipelineSettings& st) {
  const ScaledDesign sd = scale_design(d);
  const double r = rate_r(d.n(), static_cast<double>(d.L()), st.rate).r;
  return finish(stiv_fit(d, sd, pivotal(st, r)), sd, d.endo(), r, st);
}

ThresholdRun threshold_run_two_stage(const Dataset& d, const PipelineSettings& st) {
  TwoStageFit ts = stiv_two_stage(d, pivotal(st, 0.0), st.rate, st.sql);
  return finish(std::move(ts.fit), ts.design, ts.projected.endo(), ts.rate.r, st);
}

DgpParams nv_planted_dgp() {
  DgpParams p;
  p.n = 2000;
  p.K = 1;
  p.L = 2;
  p.sigma_struct = 0.1;
  p.sigma_end = 0.01;
  p.rho = 0.3;
  p.beta_star = VectorXd::Ones(1);
  p.zeta = (VectorXd(2) << 1.0, 0.0).finished();
  p.theta_star = (VectorXd(4) << 0.5, -0.5, 0.0, 0.0).finished();
  p.instruments = InstrumentLaw::rademacher;
  return p;
}

NvPipelineConfig nv_planted_config() {
  NvPipelineConfig c;
  c.c = 0.1;
  c.c_nv = 0.2;
  c.s = 1;
  c.sens.kappa1 = Kappa1Method::block;
  return c;
}

double nv_q_identity_error(const Dataset& d, const VectorXd& beta, const NvMoments& mo) {
  double worst = 0.0;
  for (Index l = 0; l < mo.m.size(); ++l)
    for (double th : {0.0, mo.m(l), mo.m(l) + 0.3, -0.7}) {
      const double q = nv_q(d, beta, static_cast<int>(l), th);
      const double dec = mo.v(l) + (mo.m(l) - th) * (mo.m(l) - th);
      worst = std::max(worst, std::abs(q - dec) / std::max(q, 1e-300));
    }
  return worst;
}

std::vector<std::string> preset_names() { return {"table3", "table4", "table5", "table7", "nv-planted"}; }

Preset make_preset(const std::string& name, const PipelineSettings& st) {
  Preset p;
  p.name = name;
  if (name == "table3" || name == "table4") {
    p.dgp = DgpParams::paper();
    p.default_reps = 1000;
    const bool np = name == "table4";
    p.description = np ? "non-pivotal STIV, n = 49, K = 25, L = 50"
                       : "pivotal STIV, n = 49, K = 25, L = 50";
    p.run = [st, np](const Dataset& d, std::uint64_t) {
      const ScaledDesign sd = scale_design(d);
      const double r = rate_r(d.n(), static_cast<double>(d.L()), st.rate).r;
      StivFit f = np ? stiv_nonpivotal(d, sd, st.sigma_star, r, st.tol) : stiv_fit(d, sd, pivotal(st, r));
      Replication rep;
      rep.beta = f.beta;
      rep.sigma = f.sigma;
      return rep;
    };
  } else if (name == "table5" || name == "table7") {
    p.dgp = DgpParams::paper(8000);
    p.default_reps = 20;
    const bool two = name == "table7";
    p.description = two ? "two-stage STIV with projection instruments, thresholds and intervals, n = 8000"
                        : "STIV with all instruments, thresholds and intervals, n = 8000";
    p.extra_names = {"omega_1", "selected", "max_half_width"};
    const VectorXd bs = p.dgp.beta_star;
    p.run = [st, two, bs](const Dataset& d, std::uint64_t) {
      return from_threshold_run(two ? threshold_run_two_stage(d, st) : threshold_run(d, st), bs);
    };
  } else if (name == "nv-planted") {
    p.dgp = nv_planted_dgp();
    p.default_reps = 100;
    p.extra_names = {"omega", "q_identity_error"};
    p.description = "STIV-NV with two planted non-valid instruments (theta = 0.5, -0.5), n = 2000";
    NvPipelineConfig cfg = nv_planted_config();
    cfg.rate = st.rate;
    cfg.tol = st.tol;
    const VectorXd th = *p.dgp.theta_star;
    p.run = [cfg, th](const Dataset& d, std::uint64_t) {
      NvPipelineResult res = nv_pipeline(d, cfg);
      Replication rep;
      rep.beta = res.pilot.beta;
      rep.sigma = res.pilot.sigma;
      Eigen::VectorXi want(th.size());
      for (Index l = 0; l < th.size(); ++l) want(l) = th(l) > 0 ? 1 : (th(l) < 0 ? -1 : 0);
      rep.support_exact = res.selection.selection.signs == want;
      rep.extra = {res.selection.omega, nv_q_identity_error(d, res.pilot.beta, res.fit.moments)};
      return rep;
    };
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return p;
}

} // namespace stiv
