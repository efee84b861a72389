#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace stiv::conic {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// min c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper.
struct LinearProgram {
  VectorXd objective;
  MatrixXd eq_matrix;
  VectorXd eq_rhs;
  MatrixXd ineq_matrix;
  VectorXd ineq_rhs;
  VectorXd lower;
  VectorXd upper;

  // n free variables, zero objective, no constraints.
  explicit LinearProgram(Index n = 0);

  Index num_vars() const { return objective.size(); }
  void add_equality(const VectorXd& row, double rhs);
  void add_inequality(const VectorXd& row, double rhs);
  void validate() const;
};

// M x + q lies in the second-order cone {(t, v) : t >= |v|_2}; row 0 is t.
struct SecondOrderCone {
  MatrixXd M;
  VectorXd q;

  // The plain tuple form: variable t and variables v.
  static SecondOrderCone of_variables(Index num_vars, Index t, const std::vector<Index>& v);
};

struct ConicProgram {
  LinearProgram lp;
  std::vector<SecondOrderCone> cones;

  explicit ConicProgram(Index n = 0) : lp(n) {}
  void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

std::string to_string(SolveStatus s);

struct Tolerances {
  double feas = 1e-8;
  double gap = 1e-8;
  int max_iter = 120;
};

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  VectorXd x;
  double objective = kInf;      // c'x at the returned point
  double dual_objective = -kInf; // a lower bound on the optimum when optimal
  double residual = kInf;        // max constraint violation of x, recomputed from the program
  double gap = kInf;             // relative duality gap
  int iterations = 0;

  bool optimal() const { return status == SolveStatus::optimal; }
};

SolveResult solve_lp(const LinearProgram& p, const Tolerances& tol = {});
SolveResult solve_socp(const ConicProgram& p, const Tolerances& tol = {});

// Largest violation of any constraint of p at x (0 when feasible).
double constraint_violation(const LinearProgram& p, const VectorXd& x);
double constraint_violation(const ConicProgram& p, const VectorXd& x);

// Plain-text dump in an LP-like format for cross-checking with other solvers.
void write_text(std::ostream& os, const ConicProgram& p);

} // namespace stiv::conic
