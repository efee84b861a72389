#include "stiv/errors.hpp"
#include "stiv/estimator.hpp"

#include <cmath>
#include <sstream>

namespace stiv {

using conic::ConicProgram;
using conic::LinearProgram;
using conic::SecondOrderCone;
using conic::SolveStatus;

void StivConfig::validate() const {
  if (!(c > 0.0 && c < 1.0)) throw ConfigError("c must lie in (0,1)");
  if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("r must be positive");
  if (variant == StivVariant::nonpivotal && !(sigma_star > 0.0))
    throw ConfigError("nonpivotal STIV needs sigma_star > 0");
}

double scaled_l1(const ScaledDesign& sd, const VectorXd& beta) {
  return beta.cwiseProduct(sd.x_star).lpNorm<1>();
}

namespace {

// Thin QR of the column-scaled design, used to write |Y - X beta|_2 with a
// cone of dimension min(n, K) + 2 instead of n + 1.
struct ReducedResidual {
  MatrixXd R;   // m x K
  VectorXd qty; // m
  double rho;   // norm of the part of Y orthogonal to span(X)
};

ReducedResidual reduce(const MatrixXd& Xs, const VectorXd& y) {
  const Index n = Xs.rows(), K = Xs.cols(), m = std::min(n, K);
  Eigen::HouseholderQR<MatrixXd> qr(Xs);
  VectorXd qy = qr.householderQ().transpose() * y;
  ReducedResidual out;
  out.R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  out.qty = qy.head(m);
  out.rho = qy.tail(n - m).norm();
  return out;
}

// Cone (s, rho/sqrt(n), (qty - R b)/sqrt(n)) with b at columns [b0, b0+K) and s at sidx.
SecondOrderCone residual_cone(const ReducedResidual& rr, Index nvars, Index b0, Index sidx,
                              double n) {
  const Index m = rr.R.rows(), K = rr.R.cols();
  const double sn = std::sqrt(n);
  SecondOrderCone c;
  c.M = MatrixXd::Zero(m + 2, nvars);
  c.q = VectorXd::Zero(m + 2);
  c.M(0, sidx) = 1.0;
  c.q(1) = rr.rho / sn;
  c.M.block(2, b0, m, K) = -rr.R / sn;
  c.q.tail(m) = rr.qty / sn;
  return c;
}

void check_status(const conic::SolveResult& r, const char* what) {
  if (r.status == SolveStatus::optimal) return;
  std::ostringstream m;
  m << what << ": solver returned " << conic::to_string(r.status) << " after " << r.iterations
    << " iterations (gap " << r.gap << ", residual " << r.residual << ")";
  if (r.status == SolveStatus::infeasible || r.status == SolveStatus::unbounded)
    m << "; this program is feasible and bounded by construction, so this is a solver defect";
  throw SolverError(m.str());
}

void fill_diagnostics(const Dataset& d, const ScaledDesign& sd, StivFit& f) {
  const VectorXd resid = d.y() - d.X() * f.beta;
  f.q_hat = resid.norm() / std::sqrt(static_cast<double>(d.n()));
  const double iv = scaled_moments(d, sd, resid).lpNorm<Eigen::Infinity>();
  const double sigma = f.sigma.value_or(0.0);
  f.iv_residual = std::max(0.0, iv - sigma * f.r);
  f.q_residual = f.sigma ? std::max(0.0, f.q_hat - sigma) : 0.0;
}

} // namespace

StivFit stiv_fit(const Dataset& d, const ScaledDesign& sd, const StivConfig& cfg) {
  cfg.validate();
  const Index K = d.K(), L = d.L();
  const double n = static_cast<double>(d.n());
  // Variables: b = D_X^{-1} beta (K), sigma (1), w (K).
  const Index nv = 2 * K + 1, is = K, iw = K + 1;
  ConicProgram p(nv);
  p.lp.objective.segment(iw, K).setOnes();
  p.lp.objective(is) = cfg.c;
  p.lp.lower(is) = 0.0;

  const VectorXd g = scaled_moments(d, sd, d.y());
  p.lp.ineq_matrix = MatrixXd::Zero(2 * L + 2 * K, nv);
  p.lp.ineq_rhs = VectorXd::Zero(2 * L + 2 * K);
  p.lp.ineq_matrix.block(0, 0, L, K) = sd.Psi;
  p.lp.ineq_matrix.block(0, is, L, 1).setConstant(-cfg.r);
  p.lp.ineq_rhs.head(L) = g;
  p.lp.ineq_matrix.block(L, 0, L, K) = -sd.Psi;
  p.lp.ineq_matrix.block(L, is, L, 1).setConstant(-cfg.r);
  p.lp.ineq_rhs.segment(L, L) = -g;
  for (Index k = 0; k < K; ++k) {
    p.lp.ineq_matrix(2 * L + k, k) = 1.0;
    p.lp.ineq_matrix(2 * L + k, iw + k) = -1.0;
    p.lp.ineq_matrix(2 * L + K + k, k) = -1.0;
    p.lp.ineq_matrix(2 * L + K + k, iw + k) = -1.0;
  }
  const MatrixXd Xs = d.X() * sd.x_star.cwiseInverse().asDiagonal();
  p.cones.push_back(residual_cone(reduce(Xs, d.y()), nv, 0, is, n));

  StivFit f;
  f.r = cfg.r;
  f.solve = conic::solve_socp(p, cfg.tol);
  check_status(f.solve, "STIV");
  const VectorXd& x = f.solve.x;
  f.beta = x.head(K).cwiseQuotient(sd.x_star);
  f.sigma = std::max(0.0, x(is));
  f.objective = scaled_l1(sd, f.beta) + cfg.c * *f.sigma;
  fill_diagnostics(d, sd, f);
  return f;
}

StivFit stiv_nonpivotal(const Dataset& d, const ScaledDesign& sd, double sigma_star, double r,
                        const conic::Tolerances& tol) {
  if (!(sigma_star > 0.0)) throw ConfigError("nonpivotal STIV needs sigma_star > 0");
  if (!(r > 0.0)) throw ConfigError("r must be positive");
  const Index K = d.K(), L = d.L();
  const Index nv = 2 * K, iw = K;
  LinearProgram p(nv);
  p.objective.segment(iw, K).setOnes();
  const VectorXd g = scaled_moments(d, sd, d.y());
  const double bound = sigma_star * r;
  p.ineq_matrix = MatrixXd::Zero(2 * L + 2 * K, nv);
  p.ineq_rhs = VectorXd::Zero(2 * L + 2 * K);
  p.ineq_matrix.block(0, 0, L, K) = sd.Psi;
  p.ineq_rhs.head(L) = g.array() + bound;
  p.ineq_matrix.block(L, 0, L, K) = -sd.Psi;
  p.ineq_rhs.segment(L, L) = -g.array() + bound;
  for (Index k = 0; k < K; ++k) {
    p.ineq_matrix(2 * L + k, k) = 1.0;
    p.ineq_matrix(2 * L + k, iw + k) = -1.0;
    p.ineq_matrix(2 * L + K + k, k) = -1.0;
    p.ineq_matrix(2 * L + K + k, iw + k) = -1.0;
  }
  StivFit f;
  f.r = r;
  f.solve = conic::solve_lp(p, tol);
  if (f.solve.status == SolveStatus::infeasible) {
    // with L > K the moment band can miss the range of Psi
    std::ostringstream m;
    m << "nonpivotal STIV: no beta satisfies the moment constraints at sigma_star * r = " << bound
      << "; increase sigma_star";
    throw ConfigError(m.str());
  }
  check_status(f.solve, "nonpivotal STIV");
  f.beta = f.solve.x.head(K).cwiseQuotient(sd.x_star);
  f.objective = scaled_l1(sd, f.beta);
  fill_diagnostics(d, sd, f);
  f.iv_residual = std::max(
      0.0, scaled_moments(d, sd, d.y() - d.X() * f.beta).lpNorm<Eigen::Infinity>() - bound);
  return f;
}

StivFit fit(const Dataset& d, const ScaledDesign& sd, const StivConfig& cfg) {
  cfg.validate();
  if (cfg.variant == StivVariant::nonpivotal)
    return stiv_nonpivotal(d, sd, cfg.sigma_star, cfg.r, cfg.tol);
  return stiv_fit(d, sd, cfg);
}

VectorXd sqrt_lasso(const VectorXd& target, const MatrixXd& design, const SqrtLassoConfig& cfg) {
  const Index n = design.rows(), L = design.cols();
  if (target.size() != n) throw DimensionError("sqrt_lasso: target length differs from design rows");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("sqrt_lasso: alpha must lie in (0,1)");
  if (!(cfg.c_sql > 0.0)) throw ConfigError("sqrt_lasso: c_sql must be positive");
  const double nd = static_cast<double>(n);
  const VectorXd s = (design.array().square().colwise().sum() / nd).sqrt().transpose();
  for (Index l = 0; l < L; ++l)
    if (!(s(l) > 0.0)) throw DegenerateError("sqrt_lasso: design column " + std::to_string(l + 1) + " is zero");
  const double lambda = cfg.c_sql * std::sqrt(nd) * normal_quantile(1.0 - cfg.alpha / (2.0 * L));

  // Variables: b = s .* zeta (L), sigma, w (L).
  const Index nv = 2 * L + 1, is = L, iw = L + 1;
  ConicProgram p(nv);
  p.lp.objective(is) = 1.0;
  p.lp.objective.segment(iw, L).setConstant(lambda / nd);
  p.lp.ineq_matrix = MatrixXd::Zero(2 * L, nv);
  p.lp.ineq_rhs = VectorXd::Zero(2 * L);
  for (Index l = 0; l < L; ++l) {
    p.lp.ineq_matrix(l, l) = 1.0;
    p.lp.ineq_matrix(l, iw + l) = -1.0;
    p.lp.ineq_matrix(L + l, l) = -1.0;
    p.lp.ineq_matrix(L + l, iw + l) = -1.0;
  }
  const MatrixXd Ds = design * s.cwiseInverse().asDiagonal();
  p.cones.push_back(residual_cone(reduce(Ds, target), nv, 0, is, nd));
  auto r = conic::solve_socp(p, cfg.tol);
  check_status(r, "square-root Lasso");
  return r.x.head(L).cwiseQuotient(s);
}

Dataset projection_instruments(const Dataset& d, const std::vector<VectorXd>& first_stage) {
  const auto& endo = d.endo();
  if (first_stage.size() != endo.size())
    throw DimensionError("projection_instruments: need one coefficient vector per endogenous regressor");
  MatrixXd Zp = d.X();
  for (size_t i = 0; i < endo.size(); ++i) {
    if (first_stage[i].size() != d.L())
      throw DimensionError("projection_instruments: coefficient vector has wrong length");
    VectorXd fitted = d.Z() * first_stage[i];
    if (fitted.cwiseAbs().maxCoeff() == 0.0)
      throw DegenerateError("linear projection instrument for endogenous regressor x" +
                            std::to_string(endo[i] + 1) + " is identically zero");
    Zp.col(endo[i]) = fitted;
  }
  std::map<int, int> same;
  for (int k : d.exo()) same[k] = k;
  return Dataset(d.y(), d.X(), std::move(Zp), endo,
                 d.has_zbar() ? std::optional<MatrixXd>(d.zbar()) : std::nullopt, same);
}

TwoStageFit stiv_two_stage(const Dataset& d, const StivConfig& cfg, const RateConfig& rate_cfg,
                           const SqrtLassoConfig& sql) {
  std::vector<VectorXd> fs;
  for (int k : d.endo()) fs.push_back(sqrt_lasso(d.X().col(k), d.Z(), sql));
  Dataset proj = projection_instruments(d, fs);
  ScaledDesign sd = scale_design(proj);
  Rate rate = rate_r(proj.n(), static_cast<double>(proj.L()), rate_cfg);
  StivConfig c2 = cfg;
  c2.r = rate.r;
  StivFit f = fit(proj, sd, c2);
  return TwoStageFit{std::move(f), std::move(fs), std::move(proj), std::move(sd), rate};
}

} // namespace stiv
