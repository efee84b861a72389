#pragma once

#include "stiv/estimator.hpp"
#include "stiv/sensitivity.hpp"

#include <string>
#include <vector>

namespace stiv {

// (1 - r/kappa_endo - r^2/kappa_exo)_+^{-1} with 1/inf = 0; +inf when the
// bracket is <= 0.
double slack_factor(double r, double kappa_endo, double kappa_exo);

// J(beta) with entries of magnitude <= floor treated as zero.
IndexSet estimated_support(const VectorXd& beta, double floor = 1e-8);

struct CiSpec {
  SensitivitySource source = SensitivitySource::certificate(1);
  double r = 0.0;
  IndexSet J_end;
  ConeSpec cone{};
  ThresholdVariant variant = ThresholdVariant::standard;

  void validate() const;
};

struct ConfidenceReport {
  VectorXd half_width; // +inf allowed
  VectorXd lower;
  VectorXd upper;
  double slack = 1.0;
  std::vector<bool> finite;
  CertifiedSensitivities sens;
};

// 2 sigma r / (x_k* kappa*_k) * slack for each k.
VectorXd bound_widths(double sigma, double r, const VectorXd& x_star, const VectorXd& kappa_coord,
                      double slack);

// Intervals beta_k +- half-width_k from already certified sensitivities.
ConfidenceReport confidence_intervals(const StivFit& fit, const ScaledDesign& sd,
                                      const CertifiedSensitivities& sens, double r);

// Certifies the sensitivities named by spec, then builds the intervals.
ConfidenceReport confidence_intervals(const StivFit& fit, const ScaledDesign& sd, const CiSpec& spec,
                                      const SensitivityOptions& opt = {});

// omega_k(s); sens must come from a certificate source.
VectorXd thresholds(const StivFit& fit, const ScaledDesign& sd, const CertifiedSensitivities& sens,
                    double r);

struct Selection {
  IndexSet support;
  Eigen::VectorXi signs; // -1, 0, +1
};

// k is kept iff |beta_k| > omega_k.
Selection threshold_select(const VectorXd& beta, const VectorXd& omega);

struct ApproxSparseResult {
  double value = kInfinity;
  IndexSet argmin;
  int argmin_index = -1; // position in the candidate list
  std::vector<double> candidate_values; // +inf for skipped candidates
  std::vector<std::string> skipped;     // reasons, one per skipped candidate
};

struct ApproxSparseInput {
  double sigma = 0.0;
  double r = 0.0;
  double p = 1.0;
  double c = 0.1;
  IndexSet J_end;
  VectorXd beta_ref; // reference coefficients in original units
};

// min over candidates J of max(2 sigma r / kt_{p,J} * slack_J, 6 |(D_X^{-1} beta_ref)_{J^c}|_1 / (1-c))
// with enlarged-cone sensitivities kt. Candidates whose sensitivities exceed the
// enumeration cap are skipped; all skipped raises ConfigError.
ApproxSparseResult approx_sparse_bound(const ScaledDesign& sd, const std::vector<IndexSet>& candidates,
                                       const ApproxSparseInput& in,
                                       const SensitivityOptions& opt = {});

// Every subset of {0..K-1}; K <= 15.
std::vector<IndexSet> all_subsets(int K);

// Prefixes of the coordinates sorted by decreasing |x_k* beta_k|, from empty to full.
std::vector<IndexSet> magnitude_prefixes(const ScaledDesign& sd, const VectorXd& beta);

} // namespace stiv
