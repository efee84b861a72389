// Primal-dual interior-point method on the homogeneous self-dual embedding,
// with Nesterov-Todd scaling and a Mehrotra predictor-corrector. Follows the
// CVXOPT coneqp/conelp layout; dense linear algebra throughout.
//
// Infeasibility is detected from the embedding: when kappa dominates tau the
// iterate normalised by -(b'y + h'z) (resp. -c'x) is a Farkas certificate.
#include "interior_point.hpp"

#include <algorithm>
#include <cmath>

namespace stiv::conic::detail {

namespace {

struct Cones {
  Index lin = 0;
  std::vector<Index> soc;
  std::vector<Index> start; // offset of each SOC block
  Index m = 0;

  explicit Cones(const StandardForm& p) : lin(p.num_linear), soc(p.soc_dims) {
    Index off = lin;
    for (Index q : soc) {
      start.push_back(off);
      off += q;
    }
    m = off;
  }
  double degree() const { return static_cast<double>(lin + static_cast<Index>(soc.size())); }
};

VectorXd identity_element(const Cones& K) {
  VectorXd e = VectorXd::Zero(K.m);
  e.head(K.lin).setOnes();
  for (Index start : K.start) e(start) = 1.0;
  return e;
}

// How far v is from the interior: positive means outside.
double max_violation(const Cones& K, const VectorXd& v) {
  double t = -kInf;
  for (Index i = 0; i < K.lin; ++i) t = std::max(t, -v(i));
  for (size_t j = 0; j < K.soc.size(); ++j) {
    auto blk = v.segment(K.start[j], K.soc[j]);
    t = std::max(t, blk.tail(K.soc[j] - 1).norm() - blk(0));
  }
  return t;
}

// Largest a with v + a d in the cone (inf if unbounded).
double max_step(const Cones& K, const VectorXd& v, const VectorXd& d) {
  double a = kInf;
  for (Index i = 0; i < K.lin; ++i)
    if (d(i) < 0.0) a = std::min(a, -v(i) / d(i));
  for (size_t j = 0; j < K.soc.size(); ++j) {
    const Index st = K.start[j], q = K.soc[j];
    const double x0 = v(st), d0 = d(st);
    auto x1 = v.segment(st + 1, q - 1);
    auto d1 = d.segment(st + 1, q - 1);
    const double qa = d0 * d0 - d1.squaredNorm();
    const double qb = x0 * d0 - x1.dot(d1);
    const double qc = std::max(x0 * x0 - x1.squaredNorm(), 0.0);
    double root = kInf;
    if (qa > 0.0) {
      if (qb < 0.0) {
        const double disc = qb * qb - qa * qc;
        if (disc >= 0.0) root = qc / (-qb + std::sqrt(disc));
      }
    } else if (qa < 0.0) {
      const double disc = std::max(qb * qb - qa * qc, 0.0);
      root = qc / (-qb + std::sqrt(disc));
    } else if (qb < 0.0) {
      root = -qc / (2.0 * qb);
    }
    // Also keep the leading coordinate nonnegative.
    if (d0 < 0.0) root = std::min(root, -x0 / d0);
    a = std::min(a, root);
  }
  return a;
}

// Jordan product u o v.
VectorXd jprod(const Cones& K, const VectorXd& u, const VectorXd& v) {
  VectorXd r(K.m);
  r.head(K.lin) = u.head(K.lin).cwiseProduct(v.head(K.lin));
  for (size_t j = 0; j < K.soc.size(); ++j) {
    const Index st = K.start[j], q = K.soc[j];
    r(st) = u.segment(st, q).dot(v.segment(st, q));
    r.segment(st + 1, q - 1) =
        u(st) * v.segment(st + 1, q - 1) + v(st) * u.segment(st + 1, q - 1);
  }
  return r;
}

// Solve lambda o u = d for u.
VectorXd jdiv(const Cones& K, const VectorXd& lambda, const VectorXd& d) {
  VectorXd u(K.m);
  u.head(K.lin) = d.head(K.lin).cwiseQuotient(lambda.head(K.lin));
  for (size_t j = 0; j < K.soc.size(); ++j) {
    const Index st = K.start[j], q = K.soc[j];
    const double l0 = lambda(st);
    auto l1 = lambda.segment(st + 1, q - 1);
    auto d1 = d.segment(st + 1, q - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    const double u0 = (l0 * d(st) - l1.dot(d1)) / det;
    u(st) = u0;
    u.segment(st + 1, q - 1) = (d1 - u0 * l1) / l0;
  }
  return u;
}

// Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
struct Scaling {
  VectorXd d;                // linear part: sqrt(s/z)
  std::vector<VectorXd> wb;  // hyperbolic reflection vectors, wb' J wb = 1
  std::vector<double> eta;
};

bool compute_scaling(const Cones& K, const VectorXd& s, const VectorXd& z, Scaling& W) {
  W.d = (s.head(K.lin).array() / z.head(K.lin).array()).sqrt();
  W.wb.resize(K.soc.size());
  W.eta.resize(K.soc.size());
  for (size_t j = 0; j < K.soc.size(); ++j) {
    const Index st = K.start[j], q = K.soc[j];
    auto sb = s.segment(st, q);
    auto zb = z.segment(st, q);
    const double sn2 = sb(0) * sb(0) - sb.tail(q - 1).squaredNorm();
    const double zn2 = zb(0) * zb(0) - zb.tail(q - 1).squaredNorm();
    if (!(sn2 > 0.0) || !(zn2 > 0.0)) return false;
    const double sn = std::sqrt(sn2), zn = std::sqrt(zn2);
    VectorXd ss = sb / sn, zs = zb / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + ss.dot(zs)));
    VectorXd w(q);
    w(0) = (ss(0) + zs(0)) / (2.0 * gamma);
    w.tail(q - 1) = (ss.tail(q - 1) - zs.tail(q - 1)) / (2.0 * gamma);
    W.wb[j] = w;
    W.eta[j] = std::sqrt(sn / zn);
  }
  return W.d.allFinite();
}

// Apply W (power = 1) or W^{-1} (power = -1) to each column of a block.
template <class Block>
void apply_scaling(const Cones& K, const Scaling& W, Block&& V, int power) {
  for (Index i = 0; i < K.lin; ++i) {
    if (power > 0)
      V.row(i) *= W.d(i);
    else
      V.row(i) /= W.d(i);
  }
  for (size_t j = 0; j < K.soc.size(); ++j) {
    const Index st = K.start[j], q = K.soc[j];
    const VectorXd& w = W.wb[j];
    const double w0 = w(0);
    auto w1 = w.tail(q - 1);
    auto B = V.middleRows(st, q);
    Eigen::RowVectorXd b0 = B.row(0);
    Eigen::RowVectorXd wb1 = w1.transpose() * B.bottomRows(q - 1);
    if (power > 0) {
      // W v = eta (w0 v0 + w1'v1, v1 + (v0 + w1'v1/(1+w0)) w1)
      Eigen::RowVectorXd coef = b0 + wb1 / (1.0 + w0);
      B.row(0) = w0 * b0 + wb1;
      B.bottomRows(q - 1) += w1 * coef;
      B *= W.eta[j];
    } else {
      // W^{-1} v = (1/eta) (w0 v0 - w1'v1, v1 - (v0 - w1'v1/(1+w0)) w1)
      Eigen::RowVectorXd coef = b0 - wb1 / (1.0 + w0);
      B.row(0) = w0 * b0 - wb1;
      B.bottomRows(q - 1) -= w1 * coef;
      B /= W.eta[j];
    }
  }
}

VectorXd scale(const Cones& K, const Scaling& W, const VectorXd& v, int power) {
  VectorXd out = v;
  apply_scaling(K, W, out, power);
  return out;
}

// KKT system in scaled form (u = W dz, Gs = W^{-1} G):
//   [ 0   A'  Gs' ] [dx]   [rx        ]
//   [ A   0   0   ] [dy] = [ry        ]
//   [ Gs  0  -I   ] [u ]   [W^{-1} rz ]
// First eliminates u and factors [Gs'Gs A'; A 0]. Near the optimum the scaling
// becomes extreme and Gs'Gs loses half the digits; when refinement cannot
// bring the residual down, the full augmented matrix is factored instead.
class KktSolver {
public:
  KktSolver(const StandardForm& p, const Cones& K) : p_(p), K_(K) {}

  bool factor(const Scaling& W) {
    W_ = &W;
    augmented_ = false;
    const Index n = p_.c.size(), me = p_.A.rows();
    Gs_ = p_.G;
    apply_scaling(K_, W, Gs_, -1);
    MatrixXd M = MatrixXd::Zero(n + me, n + me);
    M.topLeftCorner(n, n).noalias() = Gs_.transpose() * Gs_;
    const double scale_h = std::max(1.0, M.topLeftCorner(n, n).diagonal().cwiseAbs().maxCoeff());
    M.topLeftCorner(n, n).diagonal().array() += 1e-13 * scale_h;
    M.topRightCorner(n, me) = p_.A.transpose();
    M.bottomLeftCorner(me, n) = p_.A;
    M.bottomRightCorner(me, me).diagonal().setConstant(-1e-13);
    lu_.compute(M);
    return std::isfinite(lu_.rcond()) && lu_.rcond() > 0.0;
  }

  void solve(const VectorXd& rx, const VectorXd& ry, const VectorXd& rz, VectorXd& dx,
             VectorXd& dy, VectorXd& dz) {
    const double target =
        1e-12 * std::max({1.0, inf_norm(rx), inf_norm(ry), inf_norm(rz)});
    if (refine(rx, ry, rz, dx, dy, dz) <= target || augmented_) return;
    factor_augmented();
    refine(rx, ry, rz, dx, dy, dz);
  }

private:
  static double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

  void factor_augmented() {
    augmented_ = true;
    const Index n = p_.c.size(), me = p_.A.rows(), m = K_.m;
    MatrixXd M = MatrixXd::Zero(n + me + m, n + me + m);
    M.topLeftCorner(n, n).diagonal().setConstant(1e-13);
    M.block(0, n, n, me) = p_.A.transpose();
    M.block(0, n + me, n, m) = Gs_.transpose();
    M.block(n, 0, me, n) = p_.A;
    M.block(n, n, me, me).diagonal().setConstant(-1e-13);
    M.block(n + me, 0, m, n) = Gs_;
    M.bottomRightCorner(m, m).diagonal().setConstant(-1.0);
    lu_.compute(M);
  }

  // Solve plus iterative refinement against the unregularised system; returns the final residual.
  double refine(const VectorXd& rx, const VectorXd& ry, const VectorXd& rz, VectorXd& dx,
                VectorXd& dy, VectorXd& dz) const {
    solve_once(rx, ry, rz, dx, dy, dz);
    double prev = kInf;
    for (int it = 0;; ++it) {
      VectorXd ex = rx - p_.A.transpose() * dy - p_.G.transpose() * dz;
      VectorXd ey = ry - p_.A * dx;
      VectorXd ez = rz - p_.G * dx + scale(K_, *W_, scale(K_, *W_, dz, 1), 1);
      const double err = std::max({inf_norm(ex), inf_norm(ey), inf_norm(ez)});
      if (it == 10 || !(err > 1e-15) || !(err < 0.5 * prev)) return std::min(err, prev);
      prev = err;
      VectorXd cx, cy, cz;
      solve_once(ex, ey, ez, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz += cz;
    }
  }

  void solve_once(const VectorXd& rx, const VectorXd& ry, const VectorXd& rz, VectorXd& dx,
                  VectorXd& dy, VectorXd& dz) const {
    const Index n = p_.c.size(), me = p_.A.rows(), m = K_.m;
    const VectorXd wrz = scale(K_, *W_, rz, -1);
    if (augmented_) {
      VectorXd rhs(n + me + m);
      rhs << rx, ry, wrz;
      const VectorXd sol = lu_.solve(rhs);
      dx = sol.head(n);
      dy = sol.segment(n, me);
      dz = scale(K_, *W_, sol.tail(m), -1);
      return;
    }
    VectorXd rhs(n + me);
    rhs.head(n) = rx + Gs_.transpose() * wrz;
    rhs.tail(me) = ry;
    const VectorXd sol = lu_.solve(rhs);
    dx = sol.head(n);
    dy = sol.tail(me);
    dz = scale(K_, *W_, Gs_ * dx - wrz, -1);
  }

  const StandardForm& p_;
  const Cones& K_;
  const Scaling* W_ = nullptr;
  bool augmented_ = false;
  MatrixXd Gs_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

} // namespace

IpmResult solve_standard(const StandardForm& p, const Tolerances& tol) {
  const Cones K(p);
  const Index n = p.c.size();
  IpmResult res;

  const VectorXd e = identity_element(K);
  const double nu = K.degree();

  Scaling W;
  W.d = VectorXd::Ones(K.lin);
  for (size_t j = 0; j < K.soc.size(); ++j) {
    VectorXd w = VectorXd::Zero(K.soc[j]);
    w(0) = 1.0;
    W.wb.push_back(w);
    W.eta.push_back(1.0);
  }
  KktSolver kkt(p, K);
  if (!kkt.factor(W)) return res;

  VectorXd x, y, z, s;
  {
    VectorXd dz;
    kkt.solve(VectorXd::Zero(n), p.b, p.h, x, y, dz);
    s = -dz;
    VectorXd dx;
    kkt.solve(-p.c, VectorXd::Zero(p.b.size()), VectorXd::Zero(K.m), dx, y, z);
  }
  {
    const double ts = max_violation(K, s);
    if (K.m > 0 && ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + ts) * e;
    const double tz = max_violation(K, z);
    if (K.m > 0 && tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + tz) * e;
  }
  double tau = 1.0, kappa = 1.0;

  const double cnorm = std::max(1.0, inf_norm(p.c));

  for (int iter = 0; iter <= tol.max_iter; ++iter) {
    res.iterations = iter;

    const VectorXd rx = p.A.transpose() * y + p.G.transpose() * z + p.c * tau;
    const VectorXd ry = p.A * x - p.b * tau;
    const VectorXd rz = p.G * x + s - p.h * tau;
    const double cx = p.c.dot(x), by = p.b.dot(y), hz = p.h.dot(z);
    const double rt = kappa + cx + by + hz;

    // Convergence on the normalised iterate.
    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    const double pres = std::max(inf_norm(ry), inf_norm(rz)) / tau;
    const double dres = inf_norm(rx) / tau / cnorm;
    const double gap = s.dot(z) / (tau * tau);
    const double relgap =
        std::max(gap, std::abs(pcost - dcost)) / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));

    res.x = x / tau;
    res.y = y / tau;
    res.z = z / tau;
    res.s = s / tau;
    res.pcost = pcost;
    res.dcost = dcost;
    res.pres = pres;
    res.dres = dres;
    res.gap = relgap;

    if (pres <= tol.feas && dres <= tol.feas && relgap <= tol.gap) {
      res.status = SolveStatus::optimal;
      return res;
    }
    // Certificates of infeasibility.
    if (by + hz < 0.0 && tau < kappa) {
      const double pinf = inf_norm(p.A.transpose() * y + p.G.transpose() * z) / (-(by + hz));
      if (pinf <= tol.feas) {
        res.status = SolveStatus::infeasible;
        res.y = y / (-(by + hz));
        res.z = z / (-(by + hz));
        return res;
      }
    }
    if (cx < 0.0 && tau < kappa) {
      const double dinf =
          std::max(inf_norm(p.A * x), inf_norm(p.G * x + s)) / (-cx);
      if (dinf <= tol.feas) {
        res.status = SolveStatus::unbounded;
        res.x = x / (-cx);
        res.s = s / (-cx);
        return res;
      }
    }
    if (iter == tol.max_iter) break;

    if (!compute_scaling(K, s, z, W)) break;
    const VectorXd lambda = scale(K, W, z, 1);
    const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);
    if (!kkt.factor(W)) break;

    VectorXd x1, y1, z1;
    kkt.solve(-p.c, p.b, p.h, x1, y1, z1);
    const double denom = p.c.dot(x1) + p.b.dot(y1) + p.h.dot(z1) - kappa / tau;

    // Solve the Newton system for a given right-hand side of the
    // complementarity rows and a target fraction of the residuals.
    auto direction = [&](double keep, const VectorXd& ds_rhs, double dk_rhs, VectorXd& dx,
                         VectorXd& dy, VectorXd& dz, VectorXd& ds, double& dtau, double& dkap) {
      const VectorXd u = jdiv(K, lambda, ds_rhs);
      const VectorXd Wu = scale(K, W, u, 1);
      VectorXd x0, y0, z0;
      kkt.solve(-keep * rx, -keep * ry, -keep * rz - Wu, x0, y0, z0);
      dtau = (-keep * rt - dk_rhs / tau - p.c.dot(x0) - p.b.dot(y0) - p.h.dot(z0)) / denom;
      dx = x0 + dtau * x1;
      dy = y0 + dtau * y1;
      dz = z0 + dtau * z1;
      dkap = (dk_rhs - kappa * dtau) / tau;
      ds = Wu - scale(K, W, scale(K, W, dz, 1), 1);
    };

    auto step_length = [&](const VectorXd& ds, const VectorXd& dz, double dtau, double dkap) {
      double a = std::min(max_step(K, s, ds), max_step(K, z, dz));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkap < 0.0) a = std::min(a, -kappa / dkap);
      return a;
    };

    // Predictor.
    VectorXd dxa, dya, dza, dsa;
    double dta = 0.0, dka = 0.0;
    direction(1.0, -jprod(K, lambda, lambda), -tau * kappa, dxa, dya, dza, dsa, dta, dka);
    const double a_aff = std::min(1.0, step_length(dsa, dza, dta, dka));
    const double sigma = std::pow(std::clamp(1.0 - a_aff, 0.0, 1.0), 3);

    // Corrector.
    const VectorXd corr = jprod(K, scale(K, W, dsa, -1), scale(K, W, dza, 1));
    VectorXd ds_rhs = -jprod(K, lambda, lambda) - corr + sigma * mu * e;
    const double dk_rhs = -tau * kappa - dta * dka + sigma * mu;
    VectorXd dx, dy, dz, ds;
    double dtau = 0.0, dkap = 0.0;
    direction(1.0 - sigma, ds_rhs, dk_rhs, dx, dy, dz, ds, dtau, dkap);
    double a = step_length(ds, dz, dtau, dkap);
    a = std::min(1.0, 0.99 * a);
    if (!(a > 1e-13) || !dx.allFinite() || !std::isfinite(dtau)) break;

    x += a * dx;
    y += a * dy;
    z += a * dz;
    s += a * ds;
    tau += a * dtau;
    kappa += a * dkap;
    if (!(tau > 0.0) || !(kappa > 0.0)) break;
  }
  res.status = SolveStatus::numerical_failure;
  return res;
}

} // namespace stiv::conic::detail
