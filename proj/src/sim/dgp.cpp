#include "stiv/errors.hpp"
#include "stiv/sim.hpp"

#include <cmath>
#include <numbers>

namespace stiv {

double Rng::uniform() {
  for (;;) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform(), u2 = uniform();
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  spare_ = rad * std::sin(ang);
  has_spare_ = true;
  return rad * std::cos(ang);
}

DgpParams DgpParams::paper(Index n, Index K, Index L) {
  DgpParams p;
  p.n = n;
  p.K = K;
  p.L = L;
  p.beta_star = VectorXd::Zero(K);
  p.beta_star.head(std::min<Index>(5, K)).setOnes();
  p.zeta = VectorXd::Constant(L - K + 1, 0.15);
  return p;
}

void DgpParams::validate() const {
  if (n < 1 || K < 1 || L < K) throw ConfigError("DGP needs n >= 1, K >= 1 and L >= K");
  if (beta_star.size() != K) throw ConfigError("beta_star must have length K");
  if (zeta.size() != L - K + 1) throw ConfigError("zeta must have length L - K + 1");
  if (!(sigma_struct >= 0.0) || !(sigma_end >= 0.0))
    throw ConfigError("noise levels must be nonnegative");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (theta_star && sigma_struct == 0.0 && theta_star->cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError("nonzero theta_star needs sigma_struct > 0");
}

Dataset generate_dgp(const DgpParams& p) {
  p.validate();
  Rng rng(p.seed);
  const Index n = p.n, K = p.K, L = p.L, L1 = p.theta_star ? p.theta_star->size() : 0;
  const Index first = L - K + 1; // instruments driving x1
  MatrixXd Z(n, L), X(n, K);
  VectorXd y(n);
  std::optional<MatrixXd> zbar;
  if (L1 > 0) zbar = MatrixXd(n, L1);
  const double root = std::sqrt(1.0 - p.rho * p.rho);
  for (Index i = 0; i < n; ++i) {
    for (Index l = 0; l < L; ++l)
      Z(i, l) = p.instruments == InstrumentLaw::gaussian ? rng.normal()
                                                         : (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double e1 = rng.normal(), e2 = rng.normal();
    const double u = p.sigma_struct * e1;
    const double v = p.sigma_end * (p.rho * e1 + root * e2);
    X(i, 0) = Z.row(i).head(first).dot(p.zeta) + v;
    for (Index k = 1; k < K; ++k) X(i, k) = Z(i, first + k - 1);
    y(i) = X.row(i).dot(p.beta_star) + u;
    for (Index l = 0; l < L1; ++l) {
      const double a = p.sigma_struct > 0.0 ? (*p.theta_star)(l) / p.sigma_struct : 0.0;
      (*zbar)(i, l) = rng.normal() + a * e1;
    }
  }
  std::map<int, int> exo;
  for (Index k = 1; k < K; ++k) exo[static_cast<int>(k)] = static_cast<int>(first + k - 1);
  return Dataset(std::move(y), std::move(X), std::move(Z), IndexSet{0}, std::move(zbar), exo);
}

} // namespace stiv
