#include "qts/dynamics.hpp"

#include <cmath>

namespace qts {

double outflow(double m, double a, double A, const ModelParams& p) {
  if (!(m >= 0.0))
    throw std::domain_error("outflow: negative or non-finite mass");
  const double h = m / (p.rho * A);
  return a * std::sqrt(2.0 * p.g_a * h);
}

Vec4 drift(const Vec4& m, const Vec2& u, const Vec4& d, const ModelParams& p) {
  if (!m.allFinite() || !u.allFinite() || !d.allFinite())
    throw std::domain_error("drift: non-finite input");
  Vec4 qout;
  for (int i = 0; i < 4; ++i)
    qout[i] = outflow(std::max(0.0, m[i]), p.a[i], p.A[i], p);
  Vec4 qin;
  qin[0] = p.gamma[0] * u[0] + d[0] + qout[2];
  qin[1] = p.gamma[1] * u[1] + d[1] + qout[3];
  qin[2] = (1.0 - p.gamma[1]) * u[1] + d[2];
  qin[3] = (1.0 - p.gamma[0]) * u[0] + d[3];
  return p.rho * (qin - qout);
}

Vec4 measure(const Vec4& m, const ModelParams& p) {
  Vec4 y;
  for (int i = 0; i < 4; ++i) y[i] = m[i] / (p.rho * p.A[i]);
  return y;
}

Vec2 cv_output(const Vec4& m, const ModelParams& p) {
  return measure(m, p).head<2>();
}

Vec4 steady_state(const Vec2& u, const Vec4& d, const ModelParams& p) {
  // Top tanks: outflow equals inflow, h = (q_in/a)^2 / (2 g_a).
  Vec4 qin;
  qin[2] = (1.0 - p.gamma[1]) * u[1] + d[2];
  qin[3] = (1.0 - p.gamma[0]) * u[0] + d[3];
  qin[0] = p.gamma[0] * u[0] + d[0] + qin[2];
  qin[1] = p.gamma[1] * u[1] + d[1] + qin[3];
  for (int i = 0; i < 4; ++i)
    if (!(qin[i] > 0.0))
      throw std::domain_error("steady_state: non-positive net inflow to tank " +
                              std::to_string(i + 1));
  Vec4 m;
  for (int i = 0; i < 4; ++i) {
    const double h = (qin[i] / p.a[i]) * (qin[i] / p.a[i]) / (2.0 * p.g_a);
    m[i] = p.rho * p.A[i] * h;
  }
  return m;
}

LinearModel linearize(const Vec4& x_s, const Vec2& u_s, const Vec4& d_s,
                      const ModelParams& p) {
  for (int i = 0; i < 4; ++i)
    if (!(x_s[i] > 0.0))
      throw std::domain_error("linearize: operating point must be interior (m_" +
                              std::to_string(i + 1) + " <= 0)");
  LinearModel lm;
  lm.x_s = x_s;
  lm.u_s = u_s;
  lm.d_s = d_s;

  lm.A = drift_jacobian(x_s, p);
  lm.B = input_jacobian(p);
  lm.E = p.rho * Mat4::Identity();

  lm.C.setZero();
  for (int i = 0; i < 4; ++i) lm.C(i, i) = 1.0 / (p.rho * p.A[i]);
  lm.Cz = lm.C.topRows<2>();
  return lm;
}

Mat4 drift_jacobian(const Vec4& m, const ModelParams& p) {
  Vec4 dq;
  for (int i = 0; i < 4; ++i) {
    // The sqrt slope diverges as m -> 0 and makes the fixed-step
    // covariance ODE stiff; cap it at the value for a 1e-3 cm level.
    const double m_floor = p.rho * p.A[i] * 1e-3;
    dq[i] = m[i] > 0.0
                ? p.a[i] * std::sqrt(p.g_a / (2.0 * p.rho * p.A[i] *
                                              std::max(m[i], m_floor)))
                : 0.0;
  }
  Mat4 J = Mat4::Zero();
  for (int i = 0; i < 4; ++i) J(i, i) = -p.rho * dq[i];
  J(0, 2) = p.rho * dq[2];
  J(1, 3) = p.rho * dq[3];
  return J;
}

Mat42 input_jacobian(const ModelParams& p) {
  Mat42 B = Mat42::Zero();
  B(0, 0) = p.rho * p.gamma[0];
  B(1, 1) = p.rho * p.gamma[1];
  B(2, 1) = p.rho * (1.0 - p.gamma[1]);
  B(3, 0) = p.rho * (1.0 - p.gamma[0]);
  return B;
}

Vec4 plant_interval(const Vec4& m0, const Vec2& u, const Vec4& d,
                    const ModelParams& p, double Ts, int substeps,
                    std::mt19937_64& rng, bool noise_free) {
  if (substeps < 1)
    throw std::invalid_argument("plant_interval: substeps must be >= 1");
  const double dt = Ts / substeps;
  const double sdt = std::sqrt(dt);
  std::normal_distribution<double> norm(0.0, 1.0);
  Vec4 m = m0;
  for (int s = 0; s < substeps; ++s) {
    Vec4 step = drift(m, u, d, p) * dt;
    if (!noise_free)
      for (int i = 0; i < 4; ++i) step[i] += p.sigma[i] * sdt * norm(rng);
    m = (m + step).cwiseMax(0.0);
  }
  return m;
}

Vec4 measure_noisy(const Vec4& m, const ModelParams& p, std::mt19937_64& rng,
                   bool noise_free) {
  Vec4 y = measure(m, p);
  if (!noise_free) {
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int i = 0; i < 4; ++i) y[i] += std::sqrt(p.r2[i]) * norm(rng);
  }
  return y;
}

SimResult simulate_plant(const Vec4& x0, const std::vector<Vec2>& u_schedule,
                         const std::vector<Vec4>& d_schedule,
                         const ModelParams& p, double Ts, int substeps,
                         std::uint64_t seed, bool noise_free) {
  p.validate();
  if (d_schedule.size() != u_schedule.size())
    throw std::invalid_argument("simulate_plant: schedule length mismatch");
  std::mt19937_64 rng(seed);
  SimResult out;
  const std::size_t n = u_schedule.size();
  out.t.reserve(n + 1);
  out.mass.reserve(n + 1);
  out.y.reserve(n + 1);
  Vec4 m = x0;
  for (std::size_t k = 0; k <= n; ++k) {
    out.t.push_back(k * Ts);
    out.mass.push_back(m);
    out.y.push_back(measure_noisy(m, p, rng, noise_free));
    if (k < n)
      m = plant_interval(m, u_schedule[k], d_schedule[k], p, Ts, substeps, rng,
                         noise_free);
  }
  return out;
}

Eigen::Matrix2d dc_gain(const LinearModel& model) {
  const Mat4 negA = -model.A;
  const Mat42 x = negA.partialPivLu().solve(model.B);
  return model.Cz * x;
}

SecondOrderTF extract_second_order(const LinearModel& model, int out, int in) {
  if (!((out == 0 && in == 1) || (out == 1 && in == 0)))
    throw std::invalid_argument(
        "extract_second_order: only g12 and g21 reduce to the pure second "
        "order form; the diagonal entries combine a direct first order path "
        "with the cascade and are not extracted");
  for (int i = 0; i < 4; ++i)
    if (!(model.A(i, i) < 0.0))
      throw std::domain_error("extract_second_order: A is not Hurwitz");
  // g12 runs through tanks {3,1}; g21 through tanks {4,2}.
  const int bottom = out;
  const int top = out + 2;
  SecondOrderTF tf;
  tf.k = dc_gain(model)(out, in);
  const double t_bottom = -1.0 / model.A(bottom, bottom);
  const double t_top = -1.0 / model.A(top, top);
  tf.tau1 = std::max(t_bottom, t_top);
  tf.tau2 = std::min(t_bottom, t_top);
  return tf;
}

}  // namespace qts
