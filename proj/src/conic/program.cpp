#include "interior_point.hpp"
#include "stiv/conic.hpp"
#include "stiv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace stiv::conic {

LinearProgram::LinearProgram(Index n)
    : objective(VectorXd::Zero(n)), eq_matrix(0, n), eq_rhs(0), ineq_matrix(0, n), ineq_rhs(0),
      lower(VectorXd::Constant(n, -kInf)), upper(VectorXd::Constant(n, kInf)) {}

void LinearProgram::add_equality(const VectorXd& row, double rhs) {
  eq_matrix.conservativeResize(eq_matrix.rows() + 1, num_vars());
  eq_matrix.row(eq_matrix.rows() - 1) = row.transpose();
  eq_rhs.conservativeResize(eq_rhs.size() + 1);
  eq_rhs(eq_rhs.size() - 1) = rhs;
}

void LinearProgram::add_inequality(const VectorXd& row, double rhs) {
  ineq_matrix.conservativeResize(ineq_matrix.rows() + 1, num_vars());
  ineq_matrix.row(ineq_matrix.rows() - 1) = row.transpose();
  ineq_rhs.conservativeResize(ineq_rhs.size() + 1);
  ineq_rhs(ineq_rhs.size() - 1) = rhs;
}

void LinearProgram::validate() const {
  const Index n = num_vars();
  if (eq_matrix.cols() != n || ineq_matrix.cols() != n || lower.size() != n || upper.size() != n ||
      eq_matrix.rows() != eq_rhs.size() || ineq_matrix.rows() != ineq_rhs.size())
    throw DimensionError("linear program has inconsistent dimensions");
  if (!objective.allFinite() || !eq_matrix.allFinite() || !eq_rhs.allFinite() ||
      !ineq_matrix.allFinite() || !ineq_rhs.allFinite())
    throw ValidationError("linear program has non-finite coefficients");
  for (Index i = 0; i < n; ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) == kInf || upper(i) == -kInf)
      throw ValidationError("invalid variable bound");
  }
}

SecondOrderCone SecondOrderCone::of_variables(Index num_vars, Index t, const std::vector<Index>& v) {
  SecondOrderCone c;
  c.M = MatrixXd::Zero(static_cast<Index>(v.size()) + 1, num_vars);
  c.q = VectorXd::Zero(c.M.rows());
  c.M(0, t) = 1.0;
  for (size_t i = 0; i < v.size(); ++i) c.M(static_cast<Index>(i) + 1, v[i]) = 1.0;
  return c;
}

void ConicProgram::validate() const {
  lp.validate();
  for (const auto& c : cones) {
    if (c.M.cols() != lp.num_vars() || c.M.rows() != c.q.size() || c.M.rows() < 1)
      throw DimensionError("cone constraint has inconsistent dimensions");
    if (!c.M.allFinite() || !c.q.allFinite())
      throw ValidationError("cone constraint has non-finite coefficients");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
  case SolveStatus::optimal: return "optimal";
  case SolveStatus::infeasible: return "infeasible";
  case SolveStatus::unbounded: return "unbounded";
  case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

namespace {

detail::StandardForm to_standard(const ConicProgram& p) {
  const LinearProgram& lp = p.lp;
  const Index n = lp.num_vars();
  detail::StandardForm f;
  f.c = lp.objective;

  std::vector<VectorXd> arows;
  std::vector<double> brows;
  for (Index i = 0; i < lp.eq_matrix.rows(); ++i) {
    arows.push_back(lp.eq_matrix.row(i).transpose());
    brows.push_back(lp.eq_rhs(i));
  }
  std::vector<VectorXd> grows;
  std::vector<double> hrows;
  auto add_g = [&](VectorXd row, double rhs) {
    // Row equilibration keeps the embedding well scaled.
    const double s = row.lpNorm<Eigen::Infinity>();
    if (s > 0.0) {
      row /= s;
      rhs /= s;
    }
    grows.push_back(std::move(row));
    hrows.push_back(rhs);
  };
  for (Index i = 0; i < lp.ineq_matrix.rows(); ++i)
    add_g(lp.ineq_matrix.row(i).transpose(), lp.ineq_rhs(i));
  for (Index j = 0; j < n; ++j) {
    VectorXd ej = VectorXd::Unit(n, j);
    if (lp.lower(j) == lp.upper(j)) {
      arows.push_back(ej);
      brows.push_back(lp.lower(j));
      continue;
    }
    if (std::isfinite(lp.lower(j))) add_g(-ej, -lp.lower(j));
    if (std::isfinite(lp.upper(j))) add_g(ej, lp.upper(j));
  }
  // One-dimensional cones are plain inequalities.
  std::vector<const SecondOrderCone*> socs;
  for (const auto& c : p.cones) {
    if (c.M.rows() == 1)
      add_g(-c.M.row(0).transpose(), c.q(0));
    else
      socs.push_back(&c);
  }
  f.num_linear = static_cast<Index>(grows.size());
  Index m = f.num_linear;
  for (auto* c : socs) {
    f.soc_dims.push_back(c->M.rows());
    m += c->M.rows();
  }
  f.A.resize(static_cast<Index>(arows.size()), n);
  f.b.resize(static_cast<Index>(arows.size()));
  for (size_t i = 0; i < arows.size(); ++i) {
    f.A.row(static_cast<Index>(i)) = arows[i].transpose();
    f.b(static_cast<Index>(i)) = brows[i];
  }
  f.G.resize(m, n);
  f.h.resize(m);
  for (size_t i = 0; i < grows.size(); ++i) {
    f.G.row(static_cast<Index>(i)) = grows[i].transpose();
    f.h(static_cast<Index>(i)) = hrows[i];
  }
  Index off = f.num_linear;
  for (auto* c : socs) {
    f.G.middleRows(off, c->M.rows()) = -c->M;
    f.h.segment(off, c->M.rows()) = c->q;
    off += c->M.rows();
  }
  return f;
}

} // namespace

double constraint_violation(const LinearProgram& p, const VectorXd& x) {
  double v = 0.0;
  if (p.eq_matrix.rows() > 0)
    v = std::max(v, (p.eq_matrix * x - p.eq_rhs).lpNorm<Eigen::Infinity>());
  if (p.ineq_matrix.rows() > 0)
    v = std::max(v, (p.ineq_matrix * x - p.ineq_rhs).maxCoeff());
  for (Index j = 0; j < x.size(); ++j) {
    v = std::max(v, p.lower(j) - x(j));
    v = std::max(v, x(j) - p.upper(j));
  }
  return v;
}

double constraint_violation(const ConicProgram& p, const VectorXd& x) {
  double v = constraint_violation(p.lp, x);
  for (const auto& c : p.cones) {
    VectorXd u = c.M * x + c.q;
    v = std::max(v, u.tail(u.size() - 1).norm() - u(0));
  }
  return v;
}

SolveResult solve_socp(const ConicProgram& p, const Tolerances& tol) {
  p.validate();
  auto f = to_standard(p);
  auto r = detail::solve_standard(f, tol);
  SolveResult out;
  out.status = r.status;
  out.iterations = r.iterations;
  out.gap = r.gap;
  if (r.x.size() == p.lp.num_vars()) out.x = r.x;
  else out.x = VectorXd::Zero(p.lp.num_vars());
  switch (r.status) {
  case SolveStatus::optimal:
  case SolveStatus::numerical_failure:
    out.objective = p.lp.objective.dot(out.x);
    out.dual_objective = r.dcost;
    out.residual = constraint_violation(p, out.x);
    break;
  case SolveStatus::infeasible:
    out.objective = kInf;
    out.dual_objective = kInf;
    break;
  case SolveStatus::unbounded:
    out.objective = -kInf;
    out.dual_objective = -kInf;
    break;
  }
  // The embedding measures residuals on equilibrated rows; demand the same of
  // the original constraints before reporting optimality.
  if (out.status == SolveStatus::optimal && !(out.residual <= tol.feas))
    out.status = SolveStatus::numerical_failure;
  return out;
}

SolveResult solve_lp(const LinearProgram& p, const Tolerances& tol) {
  ConicProgram cp;
  cp.lp = p;
  return solve_socp(cp, tol);
}

void write_text(std::ostream& os, const ConicProgram& p) {
  const auto& lp = p.lp;
  os << std::setprecision(17);
  auto term_list = [&](const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    bool first = true;
    for (Index j = 0; j < row.size(); ++j) {
      if (row(j) == 0.0) continue;
      os << (row(j) < 0 ? " - " : (first ? " " : " + ")) << std::abs(row(j)) << " x" << j;
      first = false;
    }
    if (first) os << " 0";
  };
  os << "Minimize\n obj:";
  term_list(lp.objective.transpose());
  os << "\nSubject To\n";
  for (Index i = 0; i < lp.eq_matrix.rows(); ++i) {
    os << " e" << i << ":";
    term_list(lp.eq_matrix.row(i));
    os << " = " << lp.eq_rhs(i) << '\n';
  }
  for (Index i = 0; i < lp.ineq_matrix.rows(); ++i) {
    os << " c" << i << ":";
    term_list(lp.ineq_matrix.row(i));
    os << " <= " << lp.ineq_rhs(i) << '\n';
  }
  for (size_t k = 0; k < p.cones.size(); ++k) {
    const auto& c = p.cones[k];
    os << " \\ cone q" << k << ": rows (M x + q) with row 0 >= |rows 1..|\n";
    for (Index i = 0; i < c.M.rows(); ++i) {
      os << "  q" << k << "_" << i << ":";
      term_list(c.M.row(i));
      os << " + " << c.q(i) << '\n';
    }
  }
  os << "Bounds\n";
  for (Index j = 0; j < lp.num_vars(); ++j) {
    if (lp.lower(j) == -kInf && lp.upper(j) == kInf) {
      os << " x" << j << " free\n";
      continue;
    }
    os << ' ';
    if (lp.lower(j) == -kInf) os << "-inf";
    else os << lp.lower(j);
    os << " <= x" << j << " <= ";
    if (lp.upper(j) == kInf) os << "+inf";
    else os << lp.upper(j);
    os << '\n';
  }
  os << "End\n";
}

} // namespace stiv::conic
