#include "qts/qp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qts {

namespace {

// Solve the equality-constrained subproblem: active variables fixed,
// H_FF p_F = -grad_F on the free set.
Eigen::VectorXd free_direction(const Eigen::MatrixXd& H,
                               const Eigen::VectorXd& grad,
                               const std::vector<int>& free_idx, int n) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  const int nf = static_cast<int>(free_idx.size());
  if (nf == 0) return p;
  Eigen::MatrixXd Hff(nf, nf);
  Eigen::VectorXd gf(nf);
  for (int i = 0; i < nf; ++i) {
    gf[i] = grad[free_idx[i]];
    for (int j = 0; j < nf; ++j) Hff(i, j) = H(free_idx[i], free_idx[j]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Hff);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("qp_solve: H not positive definite on free set");
  const Eigen::VectorXd pf = llt.solve(-gf);
  for (int i = 0; i < nf; ++i) p[free_idx[i]] = pf[i];
  return p;
}

}  // namespace

QpResult qp_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                  const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                  const Eigen::VectorXd* x_warm) {
  const int n = static_cast<int>(g.size());
  if (H.rows() != n || H.cols() != n || lb.size() != n || ub.size() != n)
    throw std::invalid_argument("qp_solve: dimension mismatch");
  for (int i = 0; i < n; ++i)
    if (!(lb[i] <= ub[i])) throw std::invalid_argument("qp_solve: lb > ub");

  // active[i]: -1 at lower bound, +1 at upper bound, 0 free
  std::vector<int> active(n, 0);
  Eigen::VectorXd x(n);
  if (x_warm) {
    x = x_warm->cwiseMax(lb).cwiseMin(ub);
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("qp_solve: H not positive definite");
    x = llt.solve(-g).cwiseMax(lb).cwiseMin(ub);
  }
  for (int i = 0; i < n; ++i) {
    if (x[i] == lb[i]) active[i] = -1;
    else if (x[i] == ub[i]) active[i] = +1;
  }

  QpResult res;
  const int max_iter = 10 * n;
  while (res.iterations < max_iter) {
    ++res.iterations;
    const Eigen::VectorXd grad = H * x + g;
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i)
      if (active[i] == 0) free_idx.push_back(i);
    const Eigen::VectorXd p = free_direction(H, grad, free_idx, n);

    if (p.lpNorm<Eigen::Infinity>() < 1e-12) {
      // Stationary on the free set; check multiplier signs.
      int worst = -1;
      double worst_val = -1e-10;
      for (int i = 0; i < n; ++i) {
        if (active[i] == 0) continue;
        const double lambda = active[i] < 0 ? grad[i] : -grad[i];
        if (lambda < worst_val) {
          worst_val = lambda;
          worst = i;
        }
      }
      if (worst < 0) {
        res.converged = true;
        break;
      }
      active[worst] = 0;
      continue;
    }

    // Step to the nearest blocking bound.
    double alpha = 1.0;
    int blocking = -1;
    int block_side = 0;
    for (int i : free_idx) {
      if (p[i] > 0.0) {
        const double a = (ub[i] - x[i]) / p[i];
        if (a < alpha) { alpha = a; blocking = i; block_side = +1; }
      } else if (p[i] < 0.0) {
        const double a = (lb[i] - x[i]) / p[i];
        if (a < alpha) { alpha = a; blocking = i; block_side = -1; }
      }
    }
    x += alpha * p;
    if (blocking >= 0) {
      x[blocking] = block_side > 0 ? ub[blocking] : lb[blocking];
      active[blocking] = block_side;
    }
  }

  res.x = x;
  res.kkt_residual = qp_kkt_residual(H, g, lb, ub, x);
  return res;
}

double qp_kkt_residual(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                       const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                       const Eigen::VectorXd& x, double bound_tol) {
  const Eigen::VectorXd grad = H * x + g;
  double r = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    r = std::max(r, std::max(lb[i] - x[i], x[i] - ub[i]));
    if (x[i] <= lb[i] + bound_tol)
      r = std::max(r, std::max(0.0, -grad[i]));
    else if (x[i] >= ub[i] - bound_tol)
      r = std::max(r, std::max(0.0, grad[i]));
    else
      r = std::max(r, std::abs(grad[i]));
  }
  return r;
}

}  // namespace qts
