#ifndef QTS_KALMAN_HPP
#define QTS_KALMAN_HPP

#include <Eigen/Dense>

#include "qts/dynamics.hpp"
#include "qts/model.hpp"

namespace qts {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat84 = Eigen::Matrix<double, 8, 4>;
using Mat48 = Eigen::Matrix<double, 4, 8>;

template <int N>
struct Belief {
  Eigen::Matrix<double, N, 1> mean;
  Eigen::Matrix<double, N, N> cov;
};

template <int N, int M>
struct InnovationT {
  Eigen::Matrix<double, M, 1> e;
  Eigen::Matrix<double, M, M> Re;
  Eigen::Matrix<double, N, M> K;
};

// Continuous-time prediction: mean ODE and the Lyapunov covariance ODE
// dP/dt = A P + P A' + Sigma Sigma' integrated jointly by fixed-step RK4,
// with A evaluated along the mean trajectory. The result is symmetrized.
template <int N, class Drift, class Jacobian>
Belief<N> cd_time_update(const Belief<N>& b, Drift&& f, Jacobian&& dfdx,
                         const Eigen::Matrix<double, N, N>& diffusion,
                         double dt_total, int steps) {
  using VecN = Eigen::Matrix<double, N, 1>;
  using MatN = Eigen::Matrix<double, N, N>;
  if (dt_total == 0.0) return b;
  if (!(dt_total > 0.0) || steps < 1)
    throw std::invalid_argument("cd_time_update: bad horizon or step count");
  const MatN Q = diffusion * diffusion.transpose();
  const double h = dt_total / steps;

  VecN x = b.mean;
  MatN P = b.cov;
  VecN kx1, kx2, kx3, kx4;
  MatN kP1, kP2, kP3, kP4, A;
  auto rhs = [&](const VecN& xs, const MatN& Ps, VecN& dx, MatN& dP) {
    dx = f(xs);
    A = dfdx(xs);
    dP.noalias() = A * Ps;
    dP.noalias() += Ps * A.transpose();
    dP += Q;
  };
  for (int s = 0; s < steps; ++s) {
    rhs(x, P, kx1, kP1);
    rhs(x + 0.5 * h * kx1, P + 0.5 * h * kP1, kx2, kP2);
    rhs(x + 0.5 * h * kx2, P + 0.5 * h * kP2, kx3, kP3);
    rhs(x + h * kx3, P + h * kP3, kx4, kP4);
    x += (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
    P += (h / 6.0) * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4);
    if (!x.allFinite() || !P.allFinite())
      throw std::runtime_error("cd_time_update: integration diverged at step " +
                               std::to_string(s));
  }
  Belief<N> out;
  out.mean = x;
  out.cov = 0.5 * (P + P.transpose());
  return out;
}

// Discrete measurement update in Joseph form:
//   P+ = (I - K C) P (I - K C)' + K R K'.
template <int N, int M>
std::pair<Belief<N>, InnovationT<N, M>> cd_measurement_update(
    const Belief<N>& b, const Eigen::Matrix<double, M, 1>& y,
    const Eigen::Matrix<double, M, 1>& y_pred,
    const Eigen::Matrix<double, M, N>& C,
    const Eigen::Matrix<double, M, M>& R) {
  using MatN = Eigen::Matrix<double, N, N>;
  InnovationT<N, M> innov;
  innov.e = y - y_pred;
  innov.Re = R + C * b.cov * C.transpose();
  Eigen::LLT<Eigen::Matrix<double, M, M>> llt(innov.Re);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cd_measurement_update: innovation covariance not PD");
  innov.K = llt.solve(C * b.cov).transpose();

  Belief<N> out;
  out.mean = b.mean + innov.K * innov.e;
  const MatN IKC = MatN::Identity() - innov.K * C;
  MatN P = IKC * b.cov * IKC.transpose() + innov.K * R * innov.K.transpose();
  out.cov = 0.5 * (P + P.transpose());
  return {out, innov};
}

// ---- Disturbance-augmented QTS filters -------------------------------------

using GaussianBelief = Belief<8>;
using Innovation = InnovationT<8, 4>;

// Drift of the augmented state [m; d]: the disturbance block integrates
// pure diffusion (zero drift).
Vec8 augmented_drift(const Vec8& xa, const Vec2& u, const ModelParams& p);

// Jacobian of the augmented drift, block form [[A, E], [0, 0]].
Mat8 augmented_jacobian(const Vec8& xa, const ModelParams& p);

// diag(sigma_1..4, sigma_d,1..4)
Mat8 augmented_diffusion(const ModelParams& p);

// Measurement map of the augmented state (m-part only).
Mat48 augmented_C(const ModelParams& p);

// Default initial belief: mean [steady_state(u,0); 0] with a weakly
// informative diagonal covariance.
GaussianBelief initial_belief(const Vec2& u, const ModelParams& p);

// CD-EKF on the disturbance-augmented nonlinear model, RK4 with 10 fixed
// steps per control interval.
GaussianBelief ekf_time_update(const GaussianBelief& b, const Vec2& u,
                               double Ts, const ModelParams& p,
                               int rk_steps = 10);
std::pair<GaussianBelief, Innovation> ekf_measurement_update(
    const GaussianBelief& b, const Vec4& y, const ModelParams& p);

// CD-KF on the augmented linear model; operates on deviation variables.
GaussianBelief kf_time_update(const GaussianBelief& b, const Vec2& u_dev,
                              double Ts, const LinearModel& lm,
                              const ModelParams& p, int rk_steps = 10);
std::pair<GaussianBelief, Innovation> kf_measurement_update(
    const GaussianBelief& b, const Vec4& y_dev, const LinearModel& lm,
    const ModelParams& p);

}  // namespace qts

#endif
