#pragma once

#include "stiv/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace stiv {

// 64-bit Mersenne Twister (std::mt19937_64, fully specified by the standard).
// Uniforms take the top 53 bits; normals use the Box-Muller transform with
// both variates consumed in order (cos then sin).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform(); // in (0, 1)
  double normal();

private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Design of the simulation section: one endogenous regressor x1 driven by the
// first L-K+1 instruments, the remaining K-1 regressors equal to the last
// K-1 instruments. Optional suspect instruments zbar_l = xi_l + (theta_l/sigma_struct) e1
// with u = sigma_struct e1, so E[zbar_l u] = theta_l.
enum class InstrumentLaw { gaussian, rademacher };

struct DgpParams {
  Index n = 49;
  Index K = 25;
  Index L = 50;
  double sigma_struct = 0.3;
  double sigma_end = 0.3;
  double rho = 0.3;
  VectorXd beta_star;
  VectorXd zeta;
  std::optional<VectorXd> theta_star;
  InstrumentLaw instruments = InstrumentLaw::gaussian; // law of the valid instruments z
  std::uint64_t seed = 0;

  static DgpParams paper(Index n = 49, Index K = 25, Index L = 50);
  void validate() const;
};

// Rows are drawn one at a time: z_i (L normals, or L uniforms mapped to +-1), two normals for (u_i, v_i),
// then L1 normals for the suspect instruments.
Dataset generate_dgp(const DgpParams& p);

// Per-replication outputs collected by monte_carlo.
struct Replication {
  VectorXd beta;
  std::optional<double> sigma;
  std::optional<bool> support_exact;
  std::optional<bool> covered;
  std::vector<double> extra; // pipeline-specific scalars
};

struct McSummary {
  Index reps = 0;
  Index failures = 0;
  MatrixXd beta_pct;                     // K x 3: 5th, 50th, 95th percentiles
  std::optional<Eigen::Vector3d> sigma_pct;
  std::optional<double> support_recovery; // frequency
  std::optional<double> ci_coverage;      // frequency
  std::vector<Replication> runs;          // successful replications, by index
  std::vector<std::string> errors;        // failed replications
};

using ReplicationFn = std::function<Replication(const Dataset&, std::uint64_t seed)>;

// Replication i uses seed base_seed + i.
McSummary monte_carlo(const DgpParams& p, const ReplicationFn& run, Index reps,
                      std::uint64_t base_seed, int threads = 1);

// Linear-interpolation percentile (the "type 7" rule), q in [0, 1].
double percentile(std::vector<double> v, double q);

} // namespace stiv
