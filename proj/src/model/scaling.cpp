#include "stiv/errors.hpp"
#include "stiv/model.hpp"

#include <cmath>

namespace stiv {

ScaledDesign scale_design(const Dataset& d) {
  ScaledDesign sd;
  sd.x_star = d.X().cwiseAbs().colwise().maxCoeff().transpose();
  sd.z_star = d.Z().cwiseAbs().colwise().maxCoeff().transpose();
  for (Index k = 0; k < d.K(); ++k)
    if (!(sd.x_star(k) > 0.0))
      throw DegenerateError("cannot scale: regressor x" + std::to_string(k + 1) + " is zero");
  for (Index l = 0; l < d.L(); ++l)
    if (!(sd.z_star(l) > 0.0))
      throw DegenerateError("cannot scale: instrument z" + std::to_string(l + 1) + " is zero");

  const double n = static_cast<double>(d.n());
  MatrixXd Zs = d.Z() * sd.z_star.cwiseInverse().asDiagonal();
  MatrixXd Xs = d.X() * sd.x_star.cwiseInverse().asDiagonal();
  sd.Psi = (Zs.transpose() * Xs) / n;
  // Rounding can push |Psi| past 1 by an ulp.
  sd.Psi = sd.Psi.cwiseMax(-1.0).cwiseMin(1.0);

  if (d.has_zbar())
    sd.zbar_star = std::sqrt((d.zbar().array().square().colwise().sum() / n).maxCoeff());
  return sd;
}

VectorXd scaled_moments(const Dataset& d, const ScaledDesign& sd, const VectorXd& v) {
  VectorXd g = d.Z().transpose() * v / static_cast<double>(d.n());
  return g.cwiseQuotient(sd.z_star);
}

} // namespace stiv
