#pragma once

#include "stiv/conic.hpp"
#include "stiv/model.hpp"

#include <optional>
#include <vector>

namespace stiv {

enum class StivVariant { pivotal, nonpivotal };

struct StivConfig {
  double c = 0.1;
  double r = 0.0;
  StivVariant variant = StivVariant::pivotal;
  double sigma_star = 0.0; // nonpivotal only
  conic::Tolerances tol{};

  void validate() const;
};

struct StivFit {
  VectorXd beta;
  std::optional<double> sigma; // absent for the nonpivotal variant
  double q_hat = 0.0;          // sqrt(Qhat(beta))
  double objective = 0.0;
  double r = 0.0;
  double iv_residual = 0.0; // max(0, |(1/n) D_Z Z'(Y - X beta)|_inf - sigma r)
  double q_residual = 0.0;  // max(0, sqrt(Qhat) - sigma)
  conic::SolveResult solve;
};

// Pivotal STIV: min |D_X^{-1} beta|_1 + c sigma over the IV-constraint set.
StivFit stiv_fit(const Dataset& d, const ScaledDesign& sd, const StivConfig& cfg);

// min |D_X^{-1} beta|_1 s.t. |(1/n) D_Z Z'(Y - X beta)|_inf <= sigma_star r.
StivFit stiv_nonpivotal(const Dataset& d, const ScaledDesign& sd, double sigma_star, double r,
                        const conic::Tolerances& tol = {});

// Dispatches on cfg.variant.
StivFit fit(const Dataset& d, const ScaledDesign& sd, const StivConfig& cfg);

struct SqrtLassoConfig {
  double alpha = 0.05;
  double c_sql = 1.1;
  conic::Tolerances tol{};
};

// min sqrt(Qhat(zeta)) + (lambda/n) sum_l s_l |zeta_l|, s_l the column RMS,
// lambda = c_sql sqrt(n) Phi^{-1}(1 - alpha/(2L)).
VectorXd sqrt_lasso(const VectorXd& target, const MatrixXd& design, const SqrtLassoConfig& cfg);

// Instruments replaced by fitted values Z zeta_k for each endogenous k (in
// endo() order) and the exogenous regressors themselves; L' = K.
Dataset projection_instruments(const Dataset& d, const std::vector<VectorXd>& first_stage);

struct TwoStageFit {
  StivFit fit;
  std::vector<VectorXd> first_stage; // one per endogenous regressor
  Dataset projected;
  ScaledDesign design;
  Rate rate;
};

// Square-root Lasso first stage, projection instruments, then STIV with r at L' = K.
TwoStageFit stiv_two_stage(const Dataset& d, const StivConfig& cfg, const RateConfig& rate_cfg,
                           const SqrtLassoConfig& sql);

// |D_X^{-1} beta|_1.
double scaled_l1(const ScaledDesign& sd, const VectorXd& beta);

} // namespace stiv
