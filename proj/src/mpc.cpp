#include "qts/mpc.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace qts {

DiscreteModel zoh_discretize(const LinearModel& model, double Ts) {
  if (!(Ts > 0.0)) throw std::invalid_argument("zoh_discretize: Ts must be positive");
  Eigen::Matrix<double, 10, 10> M = Eigen::Matrix<double, 10, 10>::Zero();
  M.block<4, 4>(0, 0) = model.A;
  M.block<4, 2>(0, 4) = model.B;
  M.block<4, 4>(0, 6) = model.E;
  const Eigen::Matrix<double, 10, 10> Md = (M * Ts).exp();
  DiscreteModel d;
  d.Ad = Md.block<4, 4>(0, 0);
  d.Bd = Md.block<4, 2>(0, 4);
  d.Ed = Md.block<4, 4>(0, 6);
  d.Ts = Ts;
  return d;
}

MpcConfig paper_mpc_config() {
  MpcConfig c;
  c.Q = 10.0 * Eigen::Matrix2d::Identity();
  c.S = Eigen::Matrix2d::Identity();
  c.Nc = 160;
  c.Ts = 5.0;
  c.u_lb = 160.0;
  c.u_ub = 350.0;
  return c;
}

std::vector<Vec2> pad_horizon(const std::vector<Vec2>& zbar, int Nc) {
  if (zbar.empty()) throw std::invalid_argument("pad_horizon: empty setpoint preview");
  std::vector<Vec2> out(zbar.begin(),
                        zbar.size() > static_cast<std::size_t>(Nc)
                            ? zbar.begin() + Nc
                            : zbar.end());
  while (out.size() < static_cast<std::size_t>(Nc)) out.push_back(zbar.back());
  return out;
}

namespace {

// Block first-difference operator: row k has I at block k and -I at k-1.
Eigen::MatrixXd difference_operator(int Nc) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(2 * Nc, 2 * Nc);
  for (int k = 1; k < Nc; ++k)
    L.block<2, 2>(2 * k, 2 * (k - 1)) = -Eigen::Matrix2d::Identity();
  return L;
}

Eigen::MatrixXd block_diag(const Eigen::Matrix2d& W, int Nc) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2 * Nc, 2 * Nc);
  for (int k = 0; k < Nc; ++k) D.block<2, 2>(2 * k, 2 * k) = W;
  return D;
}

}  // namespace

LmpcController::LmpcController(const LinearModel& model,
                               const ModelParams& params, const MpcConfig& cfg)
    : model_(model), cfg_(cfg) {
  if (cfg.Nc < 1) throw std::invalid_argument("LmpcController: Nc must be >= 1");
  z_s_ = cv_output(model.x_s, params);
  u_prev_ = model.u_s;

  const DiscreteModel dm = zoh_discretize(model, cfg.Ts);
  const int Nc = cfg.Nc;
  const int nu = 2 * Nc;

  Gamma_.setZero(nu, nu);
  PhiX_.setZero(nu, 4);
  PhiD_.setZero(nu, 4);

  // Powers of Ad and the cumulative sums feeding Gamma/PhiX/PhiD.
  Mat4 Apow = Mat4::Identity();   // Ad^k
  Mat4 Asum = Mat4::Zero();       // sum_{j<k} Ad^j
  std::vector<Mat4> powers(Nc);
  for (int k = 0; k < Nc; ++k) {
    powers[k] = Apow;             // Ad^k
    Asum += Apow;
    Apow = dm.Ad * Apow;
    PhiX_.block<2, 4>(2 * k, 0) = model.Cz * Apow;            // Cz Ad^{k+1}
    PhiD_.block<2, 4>(2 * k, 0) = model.Cz * (Asum * dm.Ed);
  }
  for (int k = 0; k < Nc; ++k)       // prediction step k+1
    for (int j = 0; j <= k; ++j)     // input block j
      Gamma_.block<2, 2>(2 * k, 2 * j) = model.Cz * (powers[k - j] * dm.Bd);

  Lambda_ = difference_operator(Nc);
  const Eigen::MatrixXd Qbar = block_diag(cfg.Q, Nc);
  const Eigen::MatrixXd Sbar = block_diag(cfg.S, Nc);
  H_ = 2.0 * (Gamma_.transpose() * Qbar * Gamma_ +
              Lambda_.transpose() * Sbar * Lambda_);
}

Vec2 LmpcController::step(const GaussianBelief& belief,
                          const std::vector<Vec2>& zbar, OcpSolution* sol) {
  const int Nc = cfg_.Nc;
  const int nu = 2 * Nc;
  const Vec4 x0 = belief.mean.head<4>();
  const Vec4 dhat = belief.mean.tail<4>();

  const std::vector<Vec2> zb = pad_horizon(zbar, Nc);
  Eigen::VectorXd zbar_dev(nu);
  for (int k = 0; k < Nc; ++k) zbar_dev.segment<2>(2 * k) = zb[k] - z_s_;

  // Free response minus reference, and the move anchor.
  const Eigen::VectorXd r = PhiX_ * x0 + PhiD_ * dhat - zbar_dev;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(nu);
  c.segment<2>(0) = u_prev_ - model_.u_s;

  const Eigen::MatrixXd Qbar = block_diag(cfg_.Q, Nc);
  const Eigen::MatrixXd Sbar = block_diag(cfg_.S, Nc);
  const Eigen::VectorXd g =
      2.0 * (Gamma_.transpose() * (Qbar * r) -
             Lambda_.transpose() * (Sbar * c));

  Eigen::VectorXd lb(nu), ub(nu);
  for (int k = 0; k < nu; ++k) {
    lb[k] = cfg_.u_lb - model_.u_s[k % 2];
    ub[k] = cfg_.u_ub - model_.u_s[k % 2];
  }

  QpResult qp = qp_solve(H_, g, lb, ub, has_warm_ ? &u_warm_ : nullptr);

  // Shift for the next warm start.
  u_warm_.resize(nu);
  u_warm_.head(nu - 2) = qp.x.tail(nu - 2);
  u_warm_.tail(2) = qp.x.tail(2);
  has_warm_ = true;

  Vec2 u0 = model_.u_s + Vec2(qp.x.segment<2>(0));
  u0 = u0.cwiseMax(cfg_.u_lb).cwiseMin(cfg_.u_ub);
  u_prev_ = u0;

  if (sol) {
    sol->u_plan.clear();
    sol->z_pred.clear();
    const Eigen::VectorXd z = Gamma_ * qp.x + PhiX_ * x0 + PhiD_ * dhat;
    for (int k = 0; k < Nc; ++k) {
      sol->u_plan.push_back(model_.u_s + Vec2(qp.x.segment<2>(2 * k)));
      sol->z_pred.push_back(z_s_ + Vec2(z.segment<2>(2 * k)));
    }
    const Eigen::VectorXd e = z - zbar_dev;
    const Eigen::VectorXd mv = Lambda_ * qp.x - c;
    sol->objective = e.dot(Qbar * e) + mv.dot(Sbar * mv);
    sol->iterations = qp.iterations;
    sol->kkt_residual = qp.kkt_residual;
    sol->converged = qp.converged;
  }
  return u0;
}

NmpcController::NmpcController(const ModelParams& model, const MpcConfig& cfg,
                               const Vec2& u_initial)
    : model_(model), cfg_(cfg), u_prev_(u_initial) {
  if (cfg.Nc < 1) throw std::invalid_argument("NmpcController: Nc must be >= 1");
  u_warm_.assign(cfg.Nc, u_initial);
  const Eigen::MatrixXd L = difference_operator(cfg.Nc);
  move_hessian_ = L.transpose() * block_diag(cfg.S, cfg.Nc) * L;
}

namespace {

// One shooting interval with forward sensitivities: RK4 on the joint
// system (x, Sx, Su) with dSx/dt = A(x) Sx, dSu/dt = A(x) Su + B.
void shoot_with_sensitivity(const ModelParams& p, const Vec2& u,
                            const Vec4& dhat, double Ts, int substeps,
                            Vec4& x, Mat4& Sx, Mat42& Su) {
  const Mat42 B = input_jacobian(p);
  const double h = Ts / substeps;
  Sx.setIdentity();
  Su.setZero();
  for (int s = 0; s < substeps; ++s) {
    Vec4 kx[4];
    Mat4 kS[4];
    Mat42 kU[4];
    Vec4 xs = x;
    Mat4 Ss = Sx;
    Mat42 Us = Su;
    for (int stage = 0; stage < 4; ++stage) {
      const Mat4 A = drift_jacobian(xs, p);
      kx[stage] = drift(xs, u, dhat, p);
      kS[stage] = A * Ss;
      kU[stage] = A * Us + B;
      const double w = stage < 2 ? 0.5 : 1.0;
      if (stage < 3) {
        xs = x + w * h * kx[stage];
        Ss = Sx + w * h * kS[stage];
        Us = Su + w * h * kU[stage];
      }
    }
    x += (h / 6.0) * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
    Sx += (h / 6.0) * (kS[0] + 2.0 * kS[1] + 2.0 * kS[2] + kS[3]);
    Su += (h / 6.0) * (kU[0] + 2.0 * kU[1] + 2.0 * kU[2] + kU[3]);
  }
}

Mat24 cv_matrix(const ModelParams& p) {
  Mat24 Cz = Mat24::Zero();
  Cz(0, 0) = 1.0 / (p.rho * p.A[0]);
  Cz(1, 1) = 1.0 / (p.rho * p.A[1]);
  return Cz;
}

}  // namespace

double NmpcController::rollout_objective(const std::vector<Vec2>& U,
                                         const Vec4& x0, const Vec4& dhat,
                                         const std::vector<Vec2>& zbar) const {
  const Mat24 Cz = cv_matrix(model_);
  Vec4 x = x0;
  double obj = 0.0;
  Vec2 u_last = u_prev_;
  for (int k = 0; k < cfg_.Nc; ++k) {
    const Vec2 u = U[k];
    x = integrate_rk4([&](double, const Vec4& xs) {
      return drift(xs, u, dhat, model_);
    }, x, 0.0, cfg_.Ts, kRk4Substeps);
    const Vec2 e = Cz * x - zbar[k];
    obj += e.dot(cfg_.Q * e);
    const Vec2 du = u - u_last;
    obj += du.dot(cfg_.S * du);
    u_last = u;
  }
  return obj;
}

Vec2 NmpcController::step(const GaussianBelief& belief,
                          const std::vector<Vec2>& zbar, OcpSolution* sol) {
  const int Nc = cfg_.Nc;
  const int nu = 2 * Nc;
  const Vec4 x0 = belief.mean.head<4>();
  const Vec4 dhat = belief.mean.tail<4>();
  const std::vector<Vec2> zb = pad_horizon(zbar, Nc);
  const Mat24 Cz = cv_matrix(model_);

  std::vector<Vec2> U = u_warm_;
  for (auto& u : U) u = u.cwiseMax(cfg_.u_lb).cwiseMin(cfg_.u_ub);

  const Eigen::MatrixXd Lambda = difference_operator(Nc);

  double last_kkt = 0.0;
  bool qp_converged = true;
  int iter = 0;
  bool converged = false;
  for (; iter < kMaxSqpIterations; ++iter) {
    // Rollout with condensed sensitivities: W = dx_k/dU. Only the first
    // 2(k+1) columns of row block k are nonzero.
    Eigen::MatrixXd Jz = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::VectorXd rz(nu);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4, nu);
    Vec4 x = x0;
    for (int k = 0; k < Nc; ++k) {
      Mat4 Sx;
      Mat42 Su;
      shoot_with_sensitivity(model_, U[k], dhat, cfg_.Ts, kRk4Substeps, x, Sx, Su);
      const int cols = 2 * (k + 1);
      W.leftCols(cols) = Sx * W.leftCols(cols);
      W.block<4, 2>(0, 2 * k) += Su;
      Jz.block(2 * k, 0, 2, cols) = Cz * W.leftCols(cols);
      rz.segment<2>(2 * k) = Cz * x - zb[k];
    }

    Eigen::VectorXd Ustack(nu);
    for (int k = 0; k < Nc; ++k) Ustack.segment<2>(2 * k) = U[k];
    Eigen::VectorXd c = Eigen::VectorXd::Zero(nu);
    c.segment<2>(0) = u_prev_;

    // Apply the block-diagonal weights row-block-wise to stay O(Nc^2),
    // and build Jz' Qbar Jz as a symmetric rank update of sqrt(Q) Jz.
    const Eigen::Matrix2d Qsqrt = cfg_.Q.llt().matrixL();
    Eigen::MatrixXd QsJz(nu, nu);
    Eigen::VectorXd Qrz(nu);
    for (int k = 0; k < Nc; ++k) {
      QsJz.middleRows<2>(2 * k).noalias() =
          Qsqrt.transpose() * Jz.middleRows<2>(2 * k);
      Qrz.segment<2>(2 * k).noalias() = cfg_.Q * rz.segment<2>(2 * k);
    }
    const Eigen::VectorXd mv = Lambda * Ustack - c;
    Eigen::VectorXd Smv(nu);
    for (int k = 0; k < Nc; ++k)
      Smv.segment<2>(2 * k).noalias() = cfg_.S * mv.segment<2>(2 * k);

    Eigen::MatrixXd H = move_hessian_;
    H.selfadjointView<Eigen::Lower>().rankUpdate(QsJz.transpose());
    H.triangularView<Eigen::StrictlyUpper>() =
        H.triangularView<Eigen::StrictlyLower>().transpose();
    H *= 2.0;
    const Eigen::VectorXd g =
        2.0 * (Jz.transpose() * Qrz + Lambda.transpose() * Smv);

    Eigen::VectorXd lb(nu), ub(nu);
    for (int k = 0; k < nu; ++k) {
      lb[k] = cfg_.u_lb - Ustack[k];
      ub[k] = cfg_.u_ub - Ustack[k];
    }
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nu);
    QpResult qp = qp_solve(H, g, lb, ub, &zero);
    last_kkt = qp.kkt_residual;
    qp_converged = qp.converged;

    if (qp.x.lpNorm<Eigen::Infinity>() < 1e-6) {
      converged = true;
      break;
    }

    // Backtracking line search on the true objective (Armijo 1e-4).
    // rz and mv already hold the exact rollout at U.
    const double f0 = rz.dot(Qrz) + mv.dot(Smv);
    const double dirder = g.dot(qp.x);
    double alpha = 1.0;
    std::vector<Vec2> Utrial(Nc);
    while (true) {
      for (int k = 0; k < Nc; ++k) {
        Vec2 u = U[k] + alpha * Vec2(qp.x.segment<2>(2 * k));
        Utrial[k] = u.cwiseMax(cfg_.u_lb).cwiseMin(cfg_.u_ub);
      }
      const double f = rollout_objective(Utrial, x0, dhat, zb);
      if (f <= f0 + 1e-4 * alpha * dirder || alpha < 1e-4) break;
      alpha *= 0.5;
    }
    U = Utrial;
    if (alpha * qp.x.lpNorm<Eigen::Infinity>() < 1e-6) {
      converged = true;
      ++iter;
      break;
    }
  }

  Vec2 u0 = U[0].cwiseMax(cfg_.u_lb).cwiseMin(cfg_.u_ub);

  if (sol) {
    sol->u_plan = U;
    sol->z_pred.clear();
    Vec4 x = x0;
    for (int k = 0; k < Nc; ++k) {
      const Vec2 u = U[k];
      x = integrate_rk4([&](double, const Vec4& xs) {
        return drift(xs, u, dhat, model_);
      }, x, 0.0, cfg_.Ts, kRk4Substeps);
      sol->z_pred.push_back(Cz * x);
    }
    sol->objective = rollout_objective(U, x0, dhat, zb);
    sol->iterations = iter;
    sol->kkt_residual = last_kkt;
    sol->converged = converged && qp_converged;
  }

  // Shift the plan one interval for the next warm start.
  u_warm_.assign(U.begin() + 1, U.end());
  u_warm_.push_back(U.back());
  u_prev_ = u0;
  return u0;
}

}  // namespace qts
