#pragma once

#include "stiv/conic.hpp"
#include "stiv/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stiv {

inline constexpr double kInfinity = conic::kInf;

struct ConeSpec {
  double c = 0.1;
  bool enlarged = false;

  // (1+c)/(1-c) for C_J, (2+c)/(1-c) for the enlarged cone.
  double constant() const;
  // Delta in the cone implies |Delta|_1 <= l1_factor() |Delta_J|_1.
  double l1_factor() const { return 1.0 + constant(); }
  void validate() const;
};

// How certify() bounds kappa_1. `interpolation` is (l1_factor m)^{-1} min_k kappa*_k.
// `block` also solves the block program with J0 = {1..K}, whose value is kappa_1
// itself (direct) or a lower bound on it for |J| <= s (certificate), and keeps the
// larger of the two; it needs K <= enumeration_cap.
enum class Kappa1Method { interpolation, block };

struct SensitivityOptions {
  int enumeration_cap = 12;
  Kappa1Method kappa1 = Kappa1Method::interpolation;
  int threads = 1;
  conic::Tolerances tol{};
};

enum class SensitivityKind { coord, coord_cert, block, block_cert, lp_norm, kappa1_cert, coherence };

std::string to_string(SensitivityKind k);

struct SensitivityReport {
  SensitivityKind kind = SensitivityKind::coord;
  double value = 0.0; // >= 0, +inf allowed
  std::string provenance;
  long lp_count = 0;
  std::vector<int> witnesses; // coherence: row chosen for each k in J, empty if none qualifies
};

// kappa*_{k,J} = inf { |Psi Delta|_inf : Delta_k = 1, Delta in C_J }.
SensitivityReport kappa_coord(const MatrixXd& Psi, int k, const IndexSet& J, const ConeSpec& cone,
                              const SensitivityOptions& opt = {});

// kappa*_k(s), a lower bound on kappa*_{k,J} for all |J| <= s.
SensitivityReport kappa_coord_cert(const MatrixXd& Psi, int k, int s, const ConeSpec& cone,
                                   const SensitivityOptions& opt = {});

// kappa*_{J0,J} = inf { |Psi Delta|_inf : |Delta_{J0}|_1 = 1, Delta in C_J }; +inf for J0 empty.
SensitivityReport kappa_block(const MatrixXd& Psi, const IndexSet& J0, const IndexSet& J,
                              const ConeSpec& cone, const SensitivityOptions& opt = {});

// kappa*_{J0}(s), a lower bound on kappa*_{J0,J} for all |J| <= s.
SensitivityReport kappa_block_cert(const MatrixXd& Psi, const IndexSet& J0, int s,
                                   const ConeSpec& cone, const SensitivityOptions& opt = {});

struct SensitivitySource {
  enum class Kind { direct, certificate } kind = Kind::certificate;
  IndexSet J;  // direct
  int s = 1;   // certificate

  static SensitivitySource direct(IndexSet J) { return {Kind::direct, std::move(J), 0}; }
  static SensitivitySource certificate(int s) { return {Kind::certificate, {}, s}; }
};

// Lower bound on kappa_{p,J} (direct) or on kappa_{p,J} for every |J| <= s
// (certificate): (l1_factor m)^{-1/p} min_k kappa*_k with m = |J| or s.
// p = +inf is allowed.
SensitivityReport kappa_lp_norm_bounds(const MatrixXd& Psi, double p, const SensitivitySource& src,
                                       const ConeSpec& cone, const SensitivityOptions& opt = {});

// Coherence-type lower bound on kappa_{p,J} from single rows of Psi.
SensitivityReport coherence_bound(const MatrixXd& Psi, const IndexSet& J, double p,
                                  const ConeSpec& cone);

// Everything the confidence bounds need under one source.
struct CertifiedSensitivities {
  SensitivitySource source;
  ConeSpec cone;
  VectorXd coord;     // kappa*_k for each k
  double block_endo;  // kappa*_{J_end}
  double block_exo;   // kappa*_{J_end^c}
  double kappa1;      // kappa_1 lower bound
  std::string provenance_endo;
  std::string provenance_exo;
  std::string provenance_kappa1;
  long lp_count = 0;
};

enum class ThresholdVariant { standard, single_endo_remark };

// Block sensitivities fall back to kappa_1 (valid by domination) when the
// sign enumeration would exceed the cap; the provenance strings say so.
CertifiedSensitivities certify(const MatrixXd& Psi, const IndexSet& J_end,
                               const SensitivitySource& src, const ConeSpec& cone,
                               const SensitivityOptions& opt = {},
                               ThresholdVariant variant = ThresholdVariant::standard);

} // namespace stiv
