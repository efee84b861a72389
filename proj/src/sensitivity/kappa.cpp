#include "stiv/errors.hpp"
#include "stiv/parallel.hpp"
#include "stiv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stiv {

using conic::LinearProgram;
using conic::SolveStatus;

double ConeSpec::constant() const {
  return enlarged ? (2.0 + c) / (1.0 - c) : (1.0 + c) / (1.0 - c);
}

void ConeSpec::validate() const {
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("cone constant c must lie in [0, 1)");
}

std::string to_string(SensitivityKind k) {
  switch (k) {
  case SensitivityKind::coord: return "coord";
  case SensitivityKind::coord_cert: return "coord_cert";
  case SensitivityKind::block: return "block";
  case SensitivityKind::block_cert: return "block_cert";
  case SensitivityKind::lp_norm: return "lp_norm";
  case SensitivityKind::kappa1_cert: return "kappa1_cert";
  case SensitivityKind::coherence: return "coherence";
  }
  return "unknown";
}

namespace {

bool contains(const IndexSet& s, int k) { return std::find(s.begin(), s.end(), k) != s.end(); }

IndexSet normalized(IndexSet s, Index K, const char* what) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  for (int k : s)
    if (k < 0 || k >= K) {
      std::ostringstream m;
      m << what << " index " << k + 1 << " out of range 1.." << K;
      throw ConfigError(m.str());
    }
  return s;
}

IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet u;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  return u;
}

// One LP over (Delta, w, v): variables Delta (K), w for coordinates outside
// `signed_set` (their |Delta_i| <= w_i), and v >= |Psi Delta|_inf.
// Coordinates in `signed_set` carry fixed signs eps_i with eps_i Delta_i >= 0,
// so their absolute value is the linear form eps_i Delta_i.
class DeltaLp {
public:
  DeltaLp(const MatrixXd& Psi, const IndexSet& signed_set) : K_(Psi.cols()) {
    for (int i = 0; i < K_; ++i)
      if (!contains(signed_set, i)) free_.push_back(i);
    nv_ = K_ + static_cast<Index>(free_.size()) + 1;
    lp_ = LinearProgram(nv_);
    lp_.objective(nv_ - 1) = 1.0;
    lp_.lower(nv_ - 1) = 0.0;
    const Index L = Psi.rows();
    const Index rows = 2 * L + 2 * static_cast<Index>(free_.size()) + static_cast<Index>(signed_set.size()) + 1;
    lp_.ineq_matrix = MatrixXd::Zero(rows, nv_);
    lp_.ineq_rhs = VectorXd::Zero(rows);
    lp_.ineq_matrix.block(0, 0, L, K_) = Psi;
    lp_.ineq_matrix.block(L, 0, L, K_) = -Psi;
    lp_.ineq_matrix.block(0, nv_ - 1, 2 * L, 1).setConstant(-1.0);
    row_ = 2 * L;
    for (size_t f = 0; f < free_.size(); ++f) {
      const Index w = K_ + static_cast<Index>(f);
      lp_.ineq_matrix(row_, free_[f]) = 1.0;
      lp_.ineq_matrix(row_++, w) = -1.0;
      lp_.ineq_matrix(row_, free_[f]) = -1.0;
      lp_.ineq_matrix(row_++, w) = -1.0;
      lp_.lower(w) = 0.0;
    }
  }

  void sign(int i, double eps) { lp_.ineq_matrix(row_++, i) = -eps; }

  // Starting row for the cone inequality: the sum of the w variables.
  VectorXd w_sum_row() const {
    VectorXd r = VectorXd::Zero(nv_);
    r.segment(K_, static_cast<Index>(free_.size())).setOnes();
    return r;
  }

  void last_inequality(const VectorXd& row, double rhs) {
    lp_.ineq_matrix.row(row_) = row.transpose();
    lp_.ineq_rhs(row_++) = rhs;
  }

  void fix(int i, double value) {
    lp_.lower(i) = value;
    lp_.upper(i) = value;
  }

  void equality(const VectorXd& row, double rhs) { lp_.add_equality(row, rhs); }

  Index num_vars() const { return nv_; }
  LinearProgram finish() {
    lp_.ineq_matrix.conservativeResize(row_, nv_);
    lp_.ineq_rhs.conservativeResize(row_);
    return std::move(lp_);
  }

private:
  Index K_;
  std::vector<int> free_;
  Index nv_ = 0;
  Index row_ = 0;
  LinearProgram lp_;
};

// Solves `count` LPs built on demand and returns the minimum value
// (+inf when all are infeasible). Values are dual objectives, i.e. certified
// lower bounds on each LP minimum.
template <class Build>
double min_over_family(std::size_t count, Build&& build, const SensitivityOptions& opt,
                       const std::string& what) {
  std::vector<double> val(count, kInfinity);
  parallel_for(count, opt.threads, [&](std::size_t i) {
    LinearProgram lp = build(i);
    auto r = conic::solve_lp(lp, opt.tol);
    if (r.status == SolveStatus::infeasible) return;
    if (r.status != SolveStatus::optimal) {
      std::ostringstream m;
      m << what << ": LP " << i << " ended with status " << conic::to_string(r.status)
        << " after " << r.iterations << " iterations";
      throw SolverError(m.str());
    }
    val[i] = std::max(0.0, std::min(r.dual_objective, r.objective));
  });
  double best = kInfinity;
  for (double v : val) best = std::min(best, v);
  return best;
}

void check_cap(std::size_t bits, const SensitivityOptions& opt, const char* what,
               const char* suggestion) {
  if (static_cast<int>(bits) > opt.enumeration_cap) {
    std::ostringstream m;
    m << what << ": sign enumeration over " << bits << " coordinates exceeds the cap of "
      << opt.enumeration_cap << "; use " << suggestion;
    throw EnumerationCapError(m.str());
  }
}

double sign_of(std::size_t pattern, std::size_t bit) { return (pattern >> bit) & 1U ? -1.0 : 1.0; }

std::string set_str(const IndexSet& s) {
  std::ostringstream o;
  o << '{';
  for (size_t i = 0; i < s.size(); ++i) o << (i ? "," : "") << s[i] + 1;
  o << '}';
  return o.str();
}

} // namespace

SensitivityReport kappa_coord(const MatrixXd& Psi, int k, const IndexSet& J_in,
                              const ConeSpec& cone, const SensitivityOptions& opt) {
  cone.validate();
  const Index K = Psi.cols();
  if (k < 0 || k >= K) throw ConfigError("kappa_coord: k out of range");
  const IndexSet J = normalized(J_in, K, "J");
  SensitivityReport rep;
  rep.kind = SensitivityKind::coord;
  if (J.empty()) {
    rep.value = kInfinity;
    rep.provenance = "C_J = {0} for empty J, so the feasible set is empty";
    return rep;
  }
  const bool k_in = contains(J, k);
  IndexSet enumerated;
  for (int j : J)
    if (j != k) enumerated.push_back(j);
  check_cap(enumerated.size(), opt, "kappa_coord", "kappa_coord_cert");
  const IndexSet signed_set = set_union(J, {k});
  const double a = cone.constant();
  const std::size_t count = std::size_t{1} << enumerated.size();

  rep.value = min_over_family(
      count,
      [&](std::size_t pat) {
        DeltaLp b(Psi, signed_set);
        b.fix(k, 1.0);
        VectorXd row = b.w_sum_row();
        for (size_t t = 0; t < enumerated.size(); ++t) {
          const double eps = sign_of(pat, t);
          b.sign(enumerated[t], eps);
          row(enumerated[t]) -= a * eps;
        }
        // |Delta_k| = 1 sits on the J side (coefficient -a) or the J^c side (+1).
        double rhs = 0.0;
        if (k_in)
          row(k) -= a;
        else
          rhs = -1.0;
        b.last_inequality(row, rhs);
        return b.finish();
      },
      opt, "kappa_coord");
  rep.lp_count = static_cast<long>(count);
  std::ostringstream pv;
  pv << "min over " << count << " sign patterns of the coordinate LP, k=" << k + 1
     << ", J=" << set_str(J);
  rep.provenance = pv.str();
  return rep;
}

SensitivityReport kappa_coord_cert(const MatrixXd& Psi, int k, int s, const ConeSpec& cone,
                                   const SensitivityOptions& opt) {
  cone.validate();
  const Index K = Psi.cols();
  if (k < 0 || k >= K) throw ConfigError("kappa_coord_cert: k out of range");
  if (s < 1) throw ConfigError("sparsity certificate needs s >= 1");
  const double a = cone.l1_factor() * s;
  // Programs (j, eps) with eps = -1 skipped for j = k.
  std::vector<std::pair<int, double>> progs;
  for (int j = 0; j < K; ++j) {
    progs.emplace_back(j, 1.0);
    if (j != k) progs.emplace_back(j, -1.0);
  }
  SensitivityReport rep;
  rep.kind = SensitivityKind::coord_cert;
  rep.value = min_over_family(
      progs.size(),
      [&](std::size_t i) {
        const auto [j, eps] = progs[i];
        IndexSet U = j == k ? IndexSet{k} : set_union({std::min(j, k)}, {std::max(j, k)});
        DeltaLp b(Psi, U);
        b.fix(k, 1.0);
        VectorXd row = b.w_sum_row();
        if (j == k) {
          b.last_inequality(row, a - 1.0);
        } else {
          b.sign(j, eps);
          row(j) -= (a - 1.0) * eps;
          b.last_inequality(row, -1.0);
        }
        return b.finish();
      },
      opt, "kappa_coord_cert");
  rep.lp_count = static_cast<long>(progs.size());
  std::ostringstream pv;
  pv << "sparsity certificate s=" << s << ": min over " << progs.size()
     << " LPs (j, sign) with |Delta|_1 <= " << a << " |Delta_j|, k=" << k + 1;
  rep.provenance = pv.str();
  return rep;
}

SensitivityReport kappa_block(const MatrixXd& Psi, const IndexSet& J0_in, const IndexSet& J_in,
                              const ConeSpec& cone, const SensitivityOptions& opt) {
  cone.validate();
  const Index K = Psi.cols();
  const IndexSet J0 = normalized(J0_in, K, "J0");
  const IndexSet J = normalized(J_in, K, "J");
  SensitivityReport rep;
  rep.kind = SensitivityKind::block;
  if (J0.empty()) {
    rep.value = kInfinity;
    rep.provenance = "empty J0: infinite by convention";
    return rep;
  }
  if (J.empty()) {
    rep.value = kInfinity;
    rep.provenance = "C_J = {0} for empty J, so the feasible set is empty";
    return rep;
  }
  const IndexSet U = set_union(J, J0);
  check_cap(U.size() - 1, opt, "kappa_block", "kappa_block_cert");
  // The first element of J0 keeps sign +1 (Delta -> -Delta symmetry).
  IndexSet enumerated;
  for (int i : U)
    if (i != J0.front()) enumerated.push_back(i);
  const double a = cone.constant();
  const std::size_t count = std::size_t{1} << enumerated.size();
  rep.value = min_over_family(
      count,
      [&](std::size_t pat) {
        DeltaLp b(Psi, U);
        VectorXd eps = VectorXd::Zero(K);
        eps(J0.front()) = 1.0;
        for (size_t t = 0; t < enumerated.size(); ++t) eps(enumerated[t]) = sign_of(pat, t);
        VectorXd norm_row = VectorXd::Zero(b.num_vars());
        VectorXd row = b.w_sum_row();
        for (int i : U) {
          b.sign(i, eps(i));
          if (contains(J0, i)) norm_row(i) = eps(i);
          if (contains(J, i))
            row(i) -= a * eps(i);
          else
            row(i) += eps(i);
        }
        b.equality(norm_row, 1.0);
        b.last_inequality(row, 0.0);
        return b.finish();
      },
      opt, "kappa_block");
  rep.lp_count = static_cast<long>(count);
  std::ostringstream pv;
  pv << "min over " << count << " sign patterns on J u J0, J0=" << set_str(J0)
     << ", J=" << set_str(J);
  rep.provenance = pv.str();
  return rep;
}

SensitivityReport kappa_block_cert(const MatrixXd& Psi, const IndexSet& J0_in, int s,
                                   const ConeSpec& cone, const SensitivityOptions& opt) {
  cone.validate();
  const Index K = Psi.cols();
  if (s < 1) throw ConfigError("sparsity certificate needs s >= 1");
  const IndexSet J0 = normalized(J0_in, K, "J0");
  SensitivityReport rep;
  rep.kind = SensitivityKind::block_cert;
  if (J0.empty()) {
    rep.value = kInfinity;
    rep.provenance = "empty J0: infinite by convention";
    return rep;
  }
  check_cap(J0.size(), opt, "kappa_block_cert", "the kappa_1(s) bound");
  const double a = cone.l1_factor() * s;
  struct Prog {
    int j;
    std::size_t pattern;
  };
  std::vector<Prog> progs;
  std::vector<IndexSet> unions(static_cast<size_t>(K));
  std::vector<IndexSet> enums(static_cast<size_t>(K));
  for (int j = 0; j < K; ++j) {
    auto& U = unions[static_cast<size_t>(j)];
    U = set_union(J0, {j});
    for (int i : U)
      if (i != J0.front()) enums[static_cast<size_t>(j)].push_back(i);
    const std::size_t cnt = std::size_t{1} << enums[static_cast<size_t>(j)].size();
    for (std::size_t pat = 0; pat < cnt; ++pat) progs.push_back({j, pat});
  }
  rep.value = min_over_family(
      progs.size(),
      [&](std::size_t idx) {
        const auto [j, pat] = progs[idx];
        const IndexSet& U = unions[static_cast<size_t>(j)];
        const IndexSet& en = enums[static_cast<size_t>(j)];
        DeltaLp b(Psi, U);
        VectorXd eps = VectorXd::Zero(K);
        eps(J0.front()) = 1.0;
        for (size_t t = 0; t < en.size(); ++t) eps(en[t]) = sign_of(pat, t);
        VectorXd norm_row = VectorXd::Zero(b.num_vars());
        VectorXd row = b.w_sum_row();
        for (int i : U) {
          b.sign(i, eps(i));
          if (contains(J0, i)) norm_row(i) = eps(i);
          row(i) += eps(i);
        }
        row(j) -= a * eps(j);
        b.equality(norm_row, 1.0);
        b.last_inequality(row, 0.0);
        return b.finish();
      },
      opt, "kappa_block_cert");
  rep.lp_count = static_cast<long>(progs.size());
  std::ostringstream pv;
  pv << "sparsity certificate s=" << s << ": min over " << progs.size()
     << " LPs (j, signs on J0 u {j}), J0=" << set_str(J0);
  rep.provenance = pv.str();
  return rep;
}

SensitivityReport kappa_lp_norm_bounds(const MatrixXd& Psi, double p, const SensitivitySource& src,
                                       const ConeSpec& cone, const SensitivityOptions& opt) {
  cone.validate();
  if (!(p >= 1.0)) throw ConfigError("p must lie in [1, inf]");
  const Index K = Psi.cols();
  SensitivityReport rep;
  rep.kind = src.kind == SensitivitySource::Kind::certificate && p == 1.0
                 ? SensitivityKind::kappa1_cert
                 : SensitivityKind::lp_norm;
  double m = 0.0;
  if (src.kind == SensitivitySource::Kind::direct) {
    const IndexSet J = normalized(src.J, K, "J");
    if (J.empty()) {
      rep.value = kInfinity;
      rep.provenance = "C_J = {0} for empty J";
      return rep;
    }
    m = static_cast<double>(J.size());
  } else {
    if (src.s < 1) throw ConfigError("sparsity certificate needs s >= 1");
    m = static_cast<double>(src.s);
  }
  std::vector<SensitivityReport> per(static_cast<size_t>(K));
  SensitivityOptions inner = opt;
  inner.threads = 1;
  parallel_for(static_cast<size_t>(K), opt.threads, [&](std::size_t k) {
    per[k] = src.kind == SensitivitySource::Kind::direct
                 ? kappa_coord(Psi, static_cast<int>(k), src.J, cone, inner)
                 : kappa_coord_cert(Psi, static_cast<int>(k), src.s, cone, inner);
  });
  double kinf = kInfinity;
  for (const auto& r : per) {
    kinf = std::min(kinf, r.value);
    rep.lp_count += r.lp_count;
  }
  const double factor = std::isinf(p) ? 1.0 : std::pow(cone.l1_factor() * m, -1.0 / p);
  rep.value = factor * kinf;
  std::ostringstream pv;
  pv << "(" << cone.l1_factor() << " * " << m << ")^(-1/p) * min_k kappa*_k";
  if (src.kind == SensitivitySource::Kind::certificate) pv << "(s=" << src.s << ")";
  else pv << ",J";
  pv << " with p=" << p << ", kappa_inf bound " << kinf;
  rep.provenance = pv.str();
  return rep;
}

SensitivityReport coherence_bound(const MatrixXd& Psi, const IndexSet& J_in, double p,
                                  const ConeSpec& cone) {
  cone.validate();
  if (cone.enlarged) throw ConfigError("coherence bound is stated for the plain cone only");
  if (!(p >= 1.0)) throw ConfigError("p must lie in [1, inf]");
  const Index K = Psi.cols(), L = Psi.rows();
  const IndexSet J = normalized(J_in, K, "J");
  if (J.empty()) throw ConfigError("coherence bound needs a nonempty J");
  const double c = cone.c;
  const double m = static_cast<double>(J.size());
  const double width = 2.0 * m / (1.0 - c);

  // eta1 = (1-c)|Psi_lk|, eta2 = 1 - width * (max off-diagonal) / |Psi_lk| for every
  // admissible (k, l). One pair (eta1, eta2) must serve all k in J, so the rows are
  // chosen to maximise min_k eta1 * min_k eta2: for each candidate floor t on eta2,
  // every k takes its largest eta1 among rows with eta2 >= t.
  struct Cand {
    double eta1, eta2;
    int row;
  };
  std::vector<std::vector<Cand>> cands(J.size());
  std::vector<double> floors;
  for (size_t i = 0; i < J.size(); ++i) {
    const int k = J[i];
    for (Index l = 0; l < L; ++l) {
      const double diag = std::abs(Psi(l, k));
      if (!(diag > 0.0)) continue;
      double off = 0.0;
      for (Index j = 0; j < K; ++j)
        if (j != k) off = std::max(off, std::abs(Psi(l, j)));
      const double eta2 = 1.0 - width * off / diag;
      if (!(eta2 > 0.0)) continue;
      cands[i].push_back({(1.0 - c) * diag, std::min(eta2, 1.0), static_cast<int>(l)});
      floors.push_back(std::min(eta2, 1.0));
    }
  }
  double best = 0.0;
  std::vector<int> best_rows;
  for (double t : floors) {
    double e1 = kInfinity, e2 = kInfinity;
    std::vector<int> rows;
    for (const auto& list : cands) {
      const Cand* pick = nullptr;
      for (const auto& cd : list)
        if (cd.eta2 >= t && (!pick || cd.eta1 > pick->eta1)) pick = &cd;
      if (!pick) {
        e1 = 0.0;
        break;
      }
      e1 = std::min(e1, pick->eta1);
      e2 = std::min(e2, pick->eta2);
      rows.push_back(pick->row);
    }
    if (e1 * e2 > best) {
      best = e1 * e2;
      best_rows = rows;
    }
  }
  SensitivityReport rep;
  rep.kind = SensitivityKind::coherence;
  if (!(best > 0.0)) {
    rep.value = 0.0;
    rep.provenance = "no row satisfies the coherence condition for some k in J";
    return rep;
  }
  // kappa_1 >= eta1 eta2 / (2|J|). Coordinates in J obey |Delta_k| <= (1-c) |Psi Delta|_inf / (eta1 eta2);
  // those outside J are bounded through the cone by (1+c)|J| |Psi Delta|_inf / (eta1 eta2), so
  // kappa_inf >= eta1 eta2 / ((1+c)|J|). Hoelder interpolates between the two.
  const double k1 = best / (2.0 * m);
  const double kinf = best / ((1.0 + c) * m);
  rep.value = std::isinf(p) ? kinf : std::pow(k1, 1.0 / p) * std::pow(kinf, 1.0 - 1.0 / p);
  rep.witnesses = best_rows;
  std::ostringstream pv;
  pv << "coherence rows: eta1 eta2 = " << best << " shared over J; kappa_1^(1/p) kappa_inf^(1-1/p) at p=" << p;
  rep.provenance = pv.str();
  return rep;
}

CertifiedSensitivities certify(const MatrixXd& Psi, const IndexSet& J_end_in,
                               const SensitivitySource& src, const ConeSpec& cone,
                               const SensitivityOptions& opt, ThresholdVariant variant) {
  const Index K = Psi.cols();
  const IndexSet J_end = normalized(J_end_in, K, "J_end");
  IndexSet J_exo;
  for (int k = 0; k < K; ++k)
    if (!contains(J_end, k)) J_exo.push_back(k);
  const bool direct = src.kind == SensitivitySource::Kind::direct;

  CertifiedSensitivities out;
  out.source = src;
  out.cone = cone;
  out.coord.resize(K);
  SensitivityOptions inner = opt;
  inner.threads = 1;
  std::vector<long> counts(static_cast<size_t>(K));
  parallel_for(static_cast<size_t>(K), opt.threads, [&](std::size_t k) {
    auto r = direct ? kappa_coord(Psi, static_cast<int>(k), src.J, cone, inner)
                    : kappa_coord_cert(Psi, static_cast<int>(k), src.s, cone, inner);
    out.coord(static_cast<Index>(k)) = r.value;
    counts[k] = r.lp_count;
  });
  for (long c : counts) out.lp_count += c;
  const double m = direct ? static_cast<double>(normalized(src.J, K, "J").size())
                          : static_cast<double>(src.s);
  out.kappa1 = m > 0.0 ? out.coord.minCoeff() / (cone.l1_factor() * m) : kInfinity;
  out.provenance_kappa1 = "(l1_factor m)^(-1) min_k kappa*_k";
  if (opt.kappa1 == Kappa1Method::block && m > 0.0) {
    IndexSet all(static_cast<size_t>(K));
    std::iota(all.begin(), all.end(), 0);
    const std::size_t bits = direct ? static_cast<std::size_t>(K) - 1 : static_cast<std::size_t>(K);
    if (static_cast<int>(bits) <= opt.enumeration_cap) {
      auto r = direct ? kappa_block(Psi, all, src.J, cone, opt) : kappa_block_cert(Psi, all, src.s, cone, opt);
      out.lp_count += r.lp_count;
      if (r.value > out.kappa1) {
        out.kappa1 = r.value;
        out.provenance_kappa1 = "block program with J0 = {1..K}";
      }
    } else {
      out.provenance_kappa1 += " (block method skipped: K exceeds the enumeration cap)";
    }
  }

  const std::string k1name = direct ? "kappa_1,J" : "kappa_1(s)";
  auto block = [&](const IndexSet& J0, std::string& prov) -> double {
    if (J0.empty()) {
      prov = "empty block: infinite by convention";
      return kInfinity;
    }
    const std::size_t bits = direct ? set_union(J0, src.J).size() - 1 : J0.size();
    if (static_cast<int>(bits) > opt.enumeration_cap) {
      prov = "block of size " + std::to_string(J0.size()) + " exceeds the enumeration cap; " +
             k1name + " used (block sensitivity dominates kappa_1)";
      return out.kappa1;
    }
    auto r = direct ? kappa_block(Psi, J0, src.J, cone, opt)
                    : kappa_block_cert(Psi, J0, src.s, cone, opt);
    out.lp_count += r.lp_count;
    prov = r.provenance;
    return r.value;
  };

  if (variant == ThresholdVariant::single_endo_remark) {
    if (J_end.size() != 1)
      throw ConfigError("the single-endogenous threshold variant needs exactly one endogenous regressor");
    out.block_endo = out.coord(J_end.front());
    out.provenance_endo = "coordinate sensitivity of the endogenous regressor";
    out.block_exo = out.kappa1;
    out.provenance_exo = k1name + " for the exogenous block";
  } else {
    out.block_endo = block(J_end, out.provenance_endo);
    out.block_exo = block(J_exo, out.provenance_exo);
  }
  return out;
}

} // namespace stiv
