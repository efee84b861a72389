#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stiv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using IndexSet = std::vector<int>; // sorted, 0-based

// Observations of the structural model y = x'beta + u with instruments z.
// Regressor indices are 0-based internally; the CSV and CLI layers speak
// 1-based column names (x1, z1, ...).
class Dataset {
public:
  Dataset(VectorXd y, MatrixXd X, MatrixXd Z, IndexSet endo,
          std::optional<MatrixXd> zbar = std::nullopt);

  // Explicit exogenous-to-instrument map (k -> l), checked bit-exactly.
  Dataset(VectorXd y, MatrixXd X, MatrixXd Z, IndexSet endo,
          std::optional<MatrixXd> zbar, const std::map<int, int>& exo_map);

  Index n() const { return y_.size(); }
  Index K() const { return X_.cols(); }
  Index L() const { return Z_.cols(); }
  Index L1() const { return zbar_ ? zbar_->cols() : 0; }

  const VectorXd& y() const { return y_; }
  const MatrixXd& X() const { return X_; }
  const MatrixXd& Z() const { return Z_; }
  const IndexSet& endo() const { return endo_; }
  IndexSet exo() const;
  bool has_zbar() const { return zbar_.has_value(); }
  const MatrixXd& zbar() const;
  // Instrument column serving as the copy of exogenous regressor k, -1 for endogenous k.
  int instrument_of(int k) const { return exo_instrument_[static_cast<size_t>(k)]; }

  Dataset with_y(VectorXd y) const;
  Dataset with_instruments(MatrixXd Z) const;
  Dataset rows(const std::vector<Index>& idx) const;

private:
  void validate(const std::map<int, int>* exo_map);

  VectorXd y_;
  MatrixXd X_;
  MatrixXd Z_;
  IndexSet endo_;
  std::optional<MatrixXd> zbar_;
  std::vector<int> exo_instrument_;
};

struct InstrumentSpec {
  std::map<int, int> exogenous_map; // 1-based x index -> 1-based z index; empty = search
};

// Header row with y, x1..xK, z1..zL and optionally zbar1..zbarL1 in any order.
Dataset load_dataset(std::istream& csv, const std::vector<int>& endo_1based,
                     const InstrumentSpec& spec = {});
Dataset load_dataset_file(const std::string& path, const std::vector<int>& endo_1based,
                          const InstrumentSpec& spec = {});
void write_dataset_csv(std::ostream& os, const Dataset& d);

struct ScaledDesign {
  VectorXd x_star;
  VectorXd z_star;
  std::optional<double> zbar_star;
  MatrixXd Psi; // (1/n) D_Z Z'X D_X
};

ScaledDesign scale_design(const Dataset& d);

// (1/n) D_Z Z'v, the scaled instrument moments of a length-n vector.
VectorXd scaled_moments(const Dataset& d, const ScaledDesign& sd, const VectorXd& v);

enum class RateMode { practical, full };

struct RateConfig {
  double alpha = 0.05;
  RateMode mode = RateMode::practical;
  std::optional<double> A;
  std::optional<double> delta;
  std::optional<double> d_n_delta;
  double A0 = 1.0;
};

struct Rate {
  double r = 0.0;
  double alpha = 0.0;
  bool side_condition_ok = true;
};

// L is real-valued so the formula can be evaluated at non-integer L in checks.
Rate rate_r(Index n, double L, const RateConfig& cfg);

double normal_cdf(double x);
double normal_sf(double x); // 1 - Phi(x) without cancellation
double normal_quantile(double p);

} // namespace stiv
