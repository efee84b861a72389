#include "stiv/errors.hpp"
#include "stiv/model.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace stiv {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DegenerateError("normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Rate rate_r(Index n, double L, const RateConfig& cfg) {
  if (n < 1) throw ConfigError("rate needs n >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const double nd = static_cast<double>(n);
  const double Ld = L;
  Rate out;
  if (cfg.mode == RateMode::practical) {
    if (L < 2.0) throw DegenerateError("practical rate needs L >= 2 instruments");
    out.r = normal_quantile(1.0 - cfg.alpha / (2.0 * Ld)) / std::sqrt(nd);
    out.alpha = cfg.alpha;
    return out;
  }
  if (!cfg.A || !cfg.delta || !cfg.d_n_delta)
    throw ConfigError("full rate mode needs A, delta and d_n_delta");
  const double A = *cfg.A, delta = *cfg.delta, d = *cfg.d_n_delta;
  if (A < 1.0) throw ConfigError("A must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0,1]");
  if (!(d > 0.0)) throw ConfigError("d_n_delta must be positive");
  if (L <= 1.0) throw DegenerateError("full rate needs L > 1 (log L > 0)");
  const double t = A * std::sqrt(2.0 * std::log(Ld));
  out.r = t / std::sqrt(nd);
  out.alpha = 2.0 * Ld * normal_sf(t) +
              2.0 * cfg.A0 * std::pow(1.0 + t, 1.0 + delta) /
                  (std::pow(Ld, A * A - 1.0) * std::pow(d, 2.0 + delta));
  out.side_condition_ok = Ld <= std::exp(d * d / (2.0 * A * A));
  return out;
}

} // namespace stiv
