#pragma once

#include "stiv/nonvalid.hpp"
#include "stiv/sim.hpp"

#include <string>
#include <vector>

namespace stiv {

// Slots of Replication::extra. table5 / table7: omega of the first coordinate,
// size of the selected set, largest CI half-width. nv-planted: omega, then the
// Qhat decomposition error.
inline constexpr std::size_t kExtraOmega = 0;
inline constexpr std::size_t kExtraSelected = 1;
inline constexpr std::size_t kExtraHalfWidth = 2;
inline constexpr std::size_t kExtraQIdentity = 1;

// Shared tuning for the table pipelines.
struct PipelineSettings {
  double c = 0.1;
  RateConfig rate{};
  double sigma_star = 0.466; // table4
  int s = 5;                 // sparsity certificate, table5 and table7
  SqrtLassoConfig sql{};
  SensitivityOptions sens{};
  conic::Tolerances tol{};
};

struct Preset {
  std::string name;
  std::string description;
  DgpParams dgp;
  Index default_reps = 0;
  std::vector<std::string> extra_names; // labels of Replication::extra
  ReplicationFn run;
};

std::vector<std::string> preset_names();

// Throws ConfigError for an unknown name.
Preset make_preset(const std::string& name, const PipelineSettings& settings = {});

// Design and tuning of the planted non-validity experiment.
DgpParams nv_planted_dgp();
NvPipelineConfig nv_planted_config();

// Max over l and a few theta values of |Qhat_l(theta) - v_l - (m_l - theta)^2| / Qhat_l(theta).
double nv_q_identity_error(const Dataset& d, const VectorXd& beta, const NvMoments& mo);

// Thresholding pipeline on one dataset: pivotal STIV at the practical r, certificate
// sensitivities at s, thresholds and simultaneous intervals. Used by table5.
struct ThresholdRun {
  StivFit fit;
  double r = 0.0;
  CertifiedSensitivities sens;
  ConfidenceReport ci;
  Selection selection;
};

ThresholdRun threshold_run(const Dataset& d, const PipelineSettings& settings);

// Same with the two-stage fit (projection instruments). Used by table7.
ThresholdRun threshold_run_two_stage(const Dataset& d, const PipelineSettings& settings);

} // namespace stiv
