#include "stiv/errors.hpp"
#include "stiv/parallel.hpp"
#include "stiv/sim.hpp"

#include <algorithm>
#include <cmath>

namespace stiv {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("percentile of an empty sample");
  if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); }))
    throw ConfigError("percentile of a sample containing NaN");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // infinite order statistics: the interpolation limit, never inf - inf
  if (frac == 0.0 || v[lo] == v[hi] || std::isinf(v[lo])) return v[lo];
  if (std::isinf(v[hi])) return v[hi];
  return v[lo] + frac * (v[hi] - v[lo]);
}

McSummary monte_carlo(const DgpParams& p, const ReplicationFn& run, Index reps,
                      std::uint64_t base_seed, int threads) {
  if (reps < 1) throw ConfigError("monte_carlo needs reps >= 1");
  p.validate();
  std::vector<std::optional<Replication>> out(static_cast<size_t>(reps));
  std::vector<std::string> err(static_cast<size_t>(reps));
  parallel_for(static_cast<size_t>(reps), threads, [&](size_t i) {
    DgpParams pi = p;
    pi.seed = base_seed + i;
    try {
      out[i] = run(generate_dgp(pi), pi.seed);
    } catch (const Error& e) {
      err[i] = "replication " + std::to_string(i) + " (seed " + std::to_string(pi.seed) +
               "): " + e.what();
    }
  });

  McSummary s;
  s.reps = reps;
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i])
      s.runs.push_back(std::move(*out[i]));
    else
      s.errors.push_back(err[i]);
  }
  s.failures = static_cast<Index>(s.errors.size());
  if (static_cast<double>(s.failures) > 0.01 * static_cast<double>(reps))
    throw SolverError(std::to_string(s.failures) + " of " + std::to_string(reps) +
                      " replications failed; first: " + s.errors.front());
  if (s.runs.empty()) return s;

  const Index K = s.runs.front().beta.size();
  s.beta_pct.resize(K, 3);
  for (Index k = 0; k < K; ++k) {
    std::vector<double> v;
    for (const auto& r : s.runs) v.push_back(r.beta(k));
    s.beta_pct.row(k) << percentile(v, 0.05), percentile(v, 0.5), percentile(v, 0.95);
  }
  std::vector<double> sig;
  Index sup = 0, sup_n = 0, cov = 0, cov_n = 0;
  for (const auto& r : s.runs) {
    if (r.sigma) sig.push_back(*r.sigma);
    if (r.support_exact) { ++sup_n; sup += *r.support_exact; }
    if (r.covered) { ++cov_n; cov += *r.covered; }
  }
  if (!sig.empty())
    s.sigma_pct = Eigen::Vector3d(percentile(sig, 0.05), percentile(sig, 0.5), percentile(sig, 0.95));
  if (sup_n) s.support_recovery = static_cast<double>(sup) / static_cast<double>(sup_n);
  if (cov_n) s.ci_coverage = static_cast<double>(cov) / static_cast<double>(cov_n);
  return s;
}

} // namespace stiv
