#include "stiv/inference.hpp"

#include "stiv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stiv {

namespace {

double inv(double x) { return std::isinf(x) ? 0.0 : 1.0 / x; }

double sigma_of(const StivFit& fit) {
  if (!fit.sigma) throw ConfigError("confidence bounds need a pivotal fit with an estimated sigma");
  return *fit.sigma;
}

} // namespace

double slack_factor(double r, double kappa_endo, double kappa_exo) {
  // 0/k = 0 for every k (including 0); r/0 = +inf.
  auto ratio = [](double num, double k) {
    if (num == 0.0) return 0.0;
    if (k == 0.0) return kInfinity;
    return num * inv(k);
  };
  const double denom = 1.0 - ratio(r, kappa_endo) - ratio(r * r, kappa_exo);
  return denom > 0.0 ? 1.0 / denom : kInfinity;
}

IndexSet estimated_support(const VectorXd& beta, double floor) {
  IndexSet J;
  for (Index k = 0; k < beta.size(); ++k)
    if (std::abs(beta(k)) > floor) J.push_back(static_cast<int>(k));
  return J;
}

void CiSpec::validate() const {
  cone.validate();
  if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("rate r must be positive and finite");
  if (source.kind == SensitivitySource::Kind::certificate && source.s < 1)
    throw ConfigError("sparsity certificate needs s >= 1");
  if (source.kind == SensitivitySource::Kind::direct && source.J.empty())
    throw ConfigError("direct intervals need a nonempty estimated support");
}

VectorXd bound_widths(double sigma, double r, const VectorXd& x_star, const VectorXd& kappa_coord,
                      double slack) {
  VectorXd w(x_star.size());
  for (Index k = 0; k < w.size(); ++k) {
    if (std::isinf(slack)) {
      w(k) = kInfinity;
      continue;
    }
    const double kap = kappa_coord(k);
    if (kap == 0.0) {
      w(k) = kInfinity;
      continue;
    }
    w(k) = 2.0 * sigma * r * inv(kap) / x_star(k) * slack;
  }
  return w;
}

ConfidenceReport confidence_intervals(const StivFit& fit, const ScaledDesign& sd,
                                      const CertifiedSensitivities& sens, double r) {
  const double sigma = sigma_of(fit);
  if (sens.coord.size() != fit.beta.size())
    throw ConfigError("sensitivities do not match the number of regressors");
  ConfidenceReport rep;
  rep.sens = sens;
  rep.slack = slack_factor(r, sens.block_endo, sens.block_exo);
  rep.half_width = bound_widths(sigma, r, sd.x_star, sens.coord, rep.slack);
  rep.lower = fit.beta - rep.half_width;
  rep.upper = fit.beta + rep.half_width;
  rep.finite.resize(static_cast<size_t>(fit.beta.size()));
  for (Index k = 0; k < fit.beta.size(); ++k)
    rep.finite[static_cast<size_t>(k)] = std::isfinite(rep.half_width(k));
  return rep;
}

ConfidenceReport confidence_intervals(const StivFit& fit, const ScaledDesign& sd, const CiSpec& spec,
                                      const SensitivityOptions& opt) {
  spec.validate();
  auto sens = certify(sd.Psi, spec.J_end, spec.source, spec.cone, opt, spec.variant);
  return confidence_intervals(fit, sd, sens, spec.r);
}

VectorXd thresholds(const StivFit& fit, const ScaledDesign& sd, const CertifiedSensitivities& sens,
                    double r) {
  if (sens.source.kind != SensitivitySource::Kind::certificate)
    throw ConfigError("thresholds need certificate sensitivities");
  const double slack = slack_factor(r, sens.block_endo, sens.block_exo);
  return bound_widths(sigma_of(fit), r, sd.x_star, sens.coord, slack);
}

Selection threshold_select(const VectorXd& beta, const VectorXd& omega) {
  if (beta.size() != omega.size()) throw DimensionError("beta and omega differ in length");
  Selection s;
  s.signs = Eigen::VectorXi::Zero(beta.size());
  for (Index k = 0; k < beta.size(); ++k) {
    if (std::abs(beta(k)) > omega(k)) {
      s.support.push_back(static_cast<int>(k));
      s.signs(k) = beta(k) > 0.0 ? 1 : -1;
    }
  }
  return s;
}

ApproxSparseResult approx_sparse_bound(const ScaledDesign& sd, const std::vector<IndexSet>& candidates,
                                       const ApproxSparseInput& in, const SensitivityOptions& opt) {
  if (candidates.empty()) throw ConfigError("approx_sparse_bound needs at least one candidate set");
  const Index K = sd.Psi.cols();
  if (in.beta_ref.size() != K) throw DimensionError("beta_ref length differs from K");
  const ConeSpec cone{in.c, true};
  cone.validate();
  const VectorXd scaled = in.beta_ref.cwiseProduct(sd.x_star).cwiseAbs();
  IndexSet J_end = in.J_end, J_exo;
  std::sort(J_end.begin(), J_end.end());
  for (int k = 0; k < K; ++k)
    if (!std::binary_search(J_end.begin(), J_end.end(), k)) J_exo.push_back(k);

  ApproxSparseResult res;
  for (const IndexSet& J_raw : candidates) {
    IndexSet J = J_raw;
    std::sort(J.begin(), J.end());
    double bias = 0.0;
    for (int k = 0; k < K; ++k)
      if (!std::binary_search(J.begin(), J.end(), k)) bias += scaled(k);
    bias *= 6.0 / (1.0 - in.c);

    double variance = 0.0;
    if (!J.empty()) {
      try {
        const double kp = kappa_lp_norm_bounds(sd.Psi, in.p, SensitivitySource::direct(J), cone, opt).value;
        const double k1 = kappa_lp_norm_bounds(sd.Psi, 1.0, SensitivitySource::direct(J), cone, opt).value;
        auto block = [&](const IndexSet& J0) {
          if (J0.empty()) return kInfinity;
          try {
            return kappa_block(sd.Psi, J0, J, cone, opt).value;
          } catch (const EnumerationCapError&) {
            return k1;
          }
        };
        const double slack = slack_factor(in.r, block(J_end), block(J_exo));
        variance = std::isinf(slack) || kp == 0.0 ? kInfinity : 2.0 * in.sigma * in.r / kp * slack;
      } catch (const EnumerationCapError& e) {
        res.candidate_values.push_back(kInfinity);
        res.skipped.push_back(e.what());
        continue;
      }
    }
    const double v = std::max(variance, bias);
    res.candidate_values.push_back(v);
    if (res.argmin_index < 0 || v < res.value) {
      res.value = v;
      res.argmin = J;
      res.argmin_index = static_cast<int>(res.candidate_values.size()) - 1;
    }
  }
  if (res.skipped.size() == candidates.size())
    throw ConfigError("every candidate set exceeded the enumeration cap");
  return res;
}

std::vector<IndexSet> all_subsets(int K) {
  if (K < 0 || K > 15) throw ConfigError("exhaustive subset search is limited to K <= 15");
  std::vector<IndexSet> out;
  for (unsigned m = 0; m < (1U << K); ++m) {
    IndexSet s;
    for (int k = 0; k < K; ++k)
      if ((m >> k) & 1U) s.push_back(k);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<IndexSet> magnitude_prefixes(const ScaledDesign& sd, const VectorXd& beta) {
  const Index K = beta.size();
  std::vector<int> order(static_cast<size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(beta(a) * sd.x_star(a)) > std::abs(beta(b) * sd.x_star(b));
  });
  std::vector<IndexSet> out;
  IndexSet cur;
  out.push_back(cur);
  for (int k : order) {
    cur.push_back(k);
    IndexSet s = cur;
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace stiv
