#pragma once

#include "stiv/conic.hpp"

#include <vector>

namespace stiv::conic::detail {

// min c'x  s.t.  A x = b,  G x + s = h,  s in R+^{num_linear} x Q^{soc_dims[0]} x ...
struct StandardForm {
  VectorXd c;
  MatrixXd A;
  VectorXd b;
  MatrixXd G;
  VectorXd h;
  Index num_linear = 0;
  std::vector<Index> soc_dims;
};

struct IpmResult {
  SolveStatus status = SolveStatus::numerical_failure;
  VectorXd x, y, z, s;
  double pcost = kInf;
  double dcost = -kInf;
  double pres = kInf;
  double dres = kInf;
  double gap = kInf;
  int iterations = 0;
};

IpmResult solve_standard(const StandardForm& p, const Tolerances& tol);

} // namespace stiv::conic::detail
