#ifndef QTS_QP_HPP
#define QTS_QP_HPP

#include <Eigen/Dense>

namespace qts {

struct QpResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool converged = false;
};

// Box-constrained strictly convex QP
//   min 1/2 x'Hx + g'x   s.t.  lb <= x <= ub
// solved by a primal active-set method. Active variables sit exactly on
// their bounds. The iteration cap is 10*n; exceeding it returns the last
// iterate with converged = false.
//
// x_warm, when given, seeds the initial point (clamped to the box) and the
// initial active set (components exactly at a bound).
QpResult qp_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                  const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                  const Eigen::VectorXd* x_warm = nullptr);

// Max of stationarity residual over free variables, multiplier sign
// violation over active variables, and bound violation.
double qp_kkt_residual(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                       const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                       const Eigen::VectorXd& x, double bound_tol = 1e-10);

}  // namespace qts

#endif
