#include "stiv/model.hpp"
#include "stiv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stiv {

namespace {

bool same_column(const MatrixXd& A, Index a, const MatrixXd& B, Index b) {
  for (Index i = 0; i < A.rows(); ++i)
    if (A(i, a) != B(i, b)) return false;
  return true;
}

void check_finite(const MatrixXd& M, const char* name) {
  if (!M.allFinite()) throw ValidationError(std::string(name) + " contains non-finite values");
}

} // namespace

Dataset::Dataset(VectorXd y, MatrixXd X, MatrixXd Z, IndexSet endo,
                 std::optional<MatrixXd> zbar)
    : y_(std::move(y)), X_(std::move(X)), Z_(std::move(Z)), endo_(std::move(endo)),
      zbar_(std::move(zbar)) {
  validate(nullptr);
}

Dataset::Dataset(VectorXd y, MatrixXd X, MatrixXd Z, IndexSet endo,
                 std::optional<MatrixXd> zbar, const std::map<int, int>& exo_map)
    : y_(std::move(y)), X_(std::move(X)), Z_(std::move(Z)), endo_(std::move(endo)),
      zbar_(std::move(zbar)) {
  validate(&exo_map);
}

void Dataset::validate(const std::map<int, int>* exo_map) {
  const Index n = y_.size();
  if (n < 1) throw DimensionError("dataset needs at least one observation");
  if (X_.cols() < 1) throw DimensionError("dataset needs at least one regressor");
  if (X_.rows() != n || Z_.rows() != n)
    throw DimensionError("X and Z must have as many rows as y");
  if (zbar_ && zbar_->rows() != n) throw DimensionError("Zbar must have as many rows as y");
  if (Z_.cols() < X_.cols()) {
    std::ostringstream m;
    m << "need at least as many instruments as regressors (L=" << Z_.cols()
      << " < K=" << X_.cols() << ")";
    throw DimensionError(m.str());
  }
  check_finite(y_, "y");
  check_finite(X_, "X");
  check_finite(Z_, "Z");
  if (zbar_) check_finite(*zbar_, "Zbar");

  std::sort(endo_.begin(), endo_.end());
  endo_.erase(std::unique(endo_.begin(), endo_.end()), endo_.end());
  for (int k : endo_)
    if (k < 0 || k >= X_.cols()) {
      std::ostringstream m;
      m << "endogenous index " << k + 1 << " out of range 1.." << X_.cols();
      throw ValidationError(m.str());
    }

  for (Index k = 0; k < X_.cols(); ++k)
    if (X_.col(k).cwiseAbs().maxCoeff() == 0.0)
      throw DegenerateError("regressor x" + std::to_string(k + 1) + " is identically zero");
  for (Index l = 0; l < Z_.cols(); ++l)
    if (Z_.col(l).cwiseAbs().maxCoeff() == 0.0)
      throw DegenerateError("instrument z" + std::to_string(l + 1) + " is identically zero");

  exo_instrument_.assign(static_cast<size_t>(X_.cols()), -1);
  for (Index k = 0; k < X_.cols(); ++k) {
    if (std::binary_search(endo_.begin(), endo_.end(), static_cast<int>(k))) continue;
    int found = -1;
    if (exo_map && exo_map->count(static_cast<int>(k))) {
      int l = exo_map->at(static_cast<int>(k));
      if (l >= 0 && l < Z_.cols() && same_column(X_, k, Z_, l)) found = l;
    } else {
      for (Index l = 0; l < Z_.cols() && found < 0; ++l)
        if (same_column(X_, k, Z_, l)) found = static_cast<int>(l);
    }
    if (found < 0)
      throw ValidationError("exogenous regressor x" + std::to_string(k + 1) +
                            " does not match any instrument column");
    exo_instrument_[static_cast<size_t>(k)] = found;
  }
}

IndexSet Dataset::exo() const {
  IndexSet out;
  for (int k = 0; k < static_cast<int>(K()); ++k)
    if (!std::binary_search(endo_.begin(), endo_.end(), k)) out.push_back(k);
  return out;
}

const MatrixXd& Dataset::zbar() const {
  if (!zbar_) throw ConfigError("dataset has no suspect instruments (zbar columns)");
  return *zbar_;
}

Dataset Dataset::with_y(VectorXd y) const {
  Dataset d = *this;
  if (y.size() != n()) throw DimensionError("replacement y has wrong length");
  d.y_ = std::move(y);
  if (!d.y_.allFinite()) throw ValidationError("y contains non-finite values");
  return d;
}

Dataset Dataset::with_instruments(MatrixXd Z) const {
  return Dataset(y_, X_, std::move(Z), endo_, zbar_);
}

Dataset Dataset::rows(const std::vector<Index>& idx) const {
  const Index m = static_cast<Index>(idx.size());
  VectorXd y(m);
  MatrixXd X(m, K()), Z(m, L());
  std::optional<MatrixXd> zb;
  if (zbar_) zb = MatrixXd(m, L1());
  for (Index i = 0; i < m; ++i) {
    y(i) = y_(idx[static_cast<size_t>(i)]);
    X.row(i) = X_.row(idx[static_cast<size_t>(i)]);
    Z.row(i) = Z_.row(idx[static_cast<size_t>(i)]);
    if (zb) zb->row(i) = zbar_->row(idx[static_cast<size_t>(i)]);
  }
  std::map<int, int> map;
  for (Index k = 0; k < K(); ++k)
    if (exo_instrument_[static_cast<size_t>(k)] >= 0)
      map[static_cast<int>(k)] = exo_instrument_[static_cast<size_t>(k)];
  return Dataset(std::move(y), std::move(X), std::move(Z), endo_, std::move(zb), map);
}

} // namespace stiv
