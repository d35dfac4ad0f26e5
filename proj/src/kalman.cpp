#include "qts/kalman.hpp"

#include <cmath>

namespace qts {

Vec8 augmented_drift(const Vec8& xa, const Vec2& u, const ModelParams& p) {
  Vec8 dx;
  dx.head<4>() = drift(xa.head<4>(), u, xa.tail<4>(), p);
  dx.tail<4>().setZero();
  return dx;
}

Mat8 augmented_jacobian(const Vec8& xa, const ModelParams& p) {
  Mat8 J = Mat8::Zero();
  J.block<4, 4>(0, 0) = drift_jacobian(xa.head<4>(), p);
  J.block<4, 4>(0, 4) = p.rho * Mat4::Identity();
  return J;
}

Mat8 augmented_diffusion(const ModelParams& p) {
  Mat8 S = Mat8::Zero();
  for (int i = 0; i < 4; ++i) {
    S(i, i) = p.sigma[i];
    S(4 + i, 4 + i) = p.sigma_d[i];
  }
  return S;
}

Mat48 augmented_C(const ModelParams& p) {
  Mat48 C = Mat48::Zero();
  for (int i = 0; i < 4; ++i) C(i, i) = 1.0 / (p.rho * p.A[i]);
  return C;
}

GaussianBelief initial_belief(const Vec2& u, const ModelParams& p) {
  GaussianBelief b;
  b.mean.head<4>() = steady_state(u, Vec4::Zero(), p);
  b.mean.tail<4>().setZero();
  b.cov = Mat8::Zero();
  for (int i = 0; i < 4; ++i) {
    b.cov(i, i) = 1e2;
    b.cov(4 + i, 4 + i) = 1e1;
  }
  return b;
}

GaussianBelief ekf_time_update(const GaussianBelief& b, const Vec2& u,
                               double Ts, const ModelParams& p, int rk_steps) {
  return cd_time_update<8>(
      b, [&](const Vec8& x) { return augmented_drift(x, u, p); },
      [&](const Vec8& x) { return augmented_jacobian(x, p); },
      augmented_diffusion(p), Ts, rk_steps);
}

std::pair<GaussianBelief, Innovation> ekf_measurement_update(
    const GaussianBelief& b, const Vec4& y, const ModelParams& p) {
  const Mat48 C = augmented_C(p);
  const Vec4 y_pred = C * b.mean;
  Mat4 R = Mat4::Zero();
  for (int i = 0; i < 4; ++i) R(i, i) = p.r2[i];
  return cd_measurement_update<8, 4>(b, y, y_pred, C, R);
}

namespace {
Mat8 augmented_linear_A(const LinearModel& lm) {
  Mat8 A = Mat8::Zero();
  A.block<4, 4>(0, 0) = lm.A;
  A.block<4, 4>(0, 4) = lm.E;
  return A;
}
}  // namespace

GaussianBelief kf_time_update(const GaussianBelief& b, const Vec2& u_dev,
                              double Ts, const LinearModel& lm,
                              const ModelParams& p, int rk_steps) {
  const Mat8 A = augmented_linear_A(lm);
  Eigen::Matrix<double, 8, 2> B = Eigen::Matrix<double, 8, 2>::Zero();
  B.block<4, 2>(0, 0) = lm.B;
  return cd_time_update<8>(
      b, [&](const Vec8& x) -> Vec8 { return A * x + B * u_dev; },
      [&](const Vec8&) { return A; }, augmented_diffusion(p), Ts, rk_steps);
}

std::pair<GaussianBelief, Innovation> kf_measurement_update(
    const GaussianBelief& b, const Vec4& y_dev, const LinearModel& lm,
    const ModelParams& p) {
  Mat48 C = Mat48::Zero();
  C.block<4, 4>(0, 0) = lm.C;
  const Vec4 y_pred = C * b.mean;
  Mat4 R = Mat4::Zero();
  for (int i = 0; i < 4; ++i) R(i, i) = p.r2[i];
  return cd_measurement_update<8, 4>(b, y_dev, y_pred, C, R);
}

}  // namespace qts
