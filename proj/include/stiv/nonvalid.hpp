#pragma once

#include "stiv/estimator.hpp"
#include "stiv/inference.hpp"

#include <optional>

namespace stiv {

struct NvConfig {
  double c = 0.1;
  double r1 = 0.0;
  double b_hat = 0.0; // may be +inf
  conic::Tolerances tol{};

  void validate() const;
};

// Per-instrument mean and variance of w_li = zbar_li (y_i - x_i' beta).
struct NvMoments {
  VectorXd m;
  VectorXd v;
  double zbar_star = 0.0;
};

NvMoments nv_moments(const Dataset& d, const VectorXd& beta);

// Qhat_l(theta_l) = (1/n) sum_i (w_li - theta_l)^2, computed directly.
double nv_q(const Dataset& d, const VectorXd& beta, int l, double theta_l);

struct NvFit {
  VectorXd theta;
  double sigma1 = 0.0;
  NvMoments moments;
  double budget = 0.0;      // b_hat zbar_*
  double iv_residual = 0.0; // max(0, |m - theta|_inf - sigma1 r1 - budget)
  double f_residual = 0.0;  // max(0, max_l sqrt(Qhat_l) - sigma1 - budget)
  conic::SolveResult solve;
};

// min |theta|_1 + c sigma1 s.t. |m - theta|_inf <= sigma1 r1 + b zbar_*,
// ||(sqrt(v_l), theta_l - m_l)||_2 <= sigma1 + b zbar_* for every l.
NvFit nv_fit(const Dataset& d, const VectorXd& beta_hat, const NvConfig& cfg);

// V(sigma1, b, j); +inf when 2 r1 j / (1-c) >= 1.
double nv_bound_V(double sigma1, double b, double j, double r1, double c, double zbar_star);

// l1 companion bound on |theta_hat - theta*|_1.
double nv_bound_l1(double sigma1, double b, double j, double r1, double c, double zbar_star);

// 2 sigma r s / kappa_1(s) * slack, from certificate sensitivities at s.
double nv_bhat_from_stiv(const StivFit& fit, int s, double r, const CertifiedSensitivities& sens);

struct NvSelection {
  Selection selection;
  double omega = kInfinity;
  int s1 = 0;
  int rounds = 0;
};

// Flags l iff |theta_l| > omega. With s1 unset, s1 starts at |J(theta_hat)| and
// is replaced by the size of the selected set, for at most three rounds.
NvSelection nv_threshold_select(const NvFit& fit, const NvConfig& cfg, std::optional<int> s1 = {},
                                double support_floor = 1e-8);

struct NvPipelineConfig {
  double c = 0.1;    // pilot STIV
  double c_nv = 0.1; // STIV-NV
  RateConfig rate{};
  std::optional<RateConfig> rate1; // for r1; defaults to `rate`
  std::optional<double> b_hat;     // overrides the value derived from the pilot
  int s = 5; // sparsity certificate for the pilot
  std::optional<int> s1;
  ThresholdVariant variant = ThresholdVariant::standard;
  SensitivityOptions sens{};
  conic::Tolerances tol{};
};

struct NvPipelineResult {
  StivFit pilot;
  double r = 0.0;
  double r1 = 0.0;
  CertifiedSensitivities sens;
  double b_hat = 0.0;
  NvFit fit;
  NvSelection selection;
};

// Pilot STIV on the valid instruments, b_hat from certificates, STIV-NV, thresholding.
NvPipelineResult nv_pipeline(const Dataset& d, const NvPipelineConfig& cfg);

// Same with a pilot supplied by the caller. Without cfg.b_hat the pilot needs sigma.
NvPipelineResult nv_pipeline(const Dataset& d, const NvPipelineConfig& cfg, StivFit pilot);

} // namespace stiv
