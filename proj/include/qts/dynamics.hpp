#ifndef QTS_DYNAMICS_HPP
#define QTS_DYNAMICS_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "qts/model.hpp"

namespace qts {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Mat24 = Eigen::Matrix<double, 2, 4>;

// Linearization of the tank dynamics at an interior operating point.
// All matrices act on deviations from (x_s, u_s, d_s).
struct LinearModel {
  Vec4 x_s;   // tank masses [g]
  Vec2 u_s;   // pump flows [cm^3/s]
  Vec4 d_s;   // disturbance inflows [cm^3/s]
  Mat4 A;
  Mat42 B;
  Mat4 E;
  Mat4 C;    // mass -> level, diag(1/(rho*A_i))
  Mat24 Cz;  // first two rows of C
};

// Second order transfer function k / ((tau1 s + 1)(tau2 s + 1)), tau1 >= tau2.
struct SecondOrderTF {
  double k;
  double tau1;
  double tau2;
};

// Outlet flow a*sqrt(2*g_a*h) with h = m/(rho*A). Zero at m = 0,
// domain error for m < 0.
double outflow(double m, double a, double A, const ModelParams& p);

// Mass balance right-hand side. Tank inflows follow the fixed topology:
// tank 3 feeds tank 1, tank 4 feeds tank 2. Masses are clamped to zero
// from below before the square root.
Vec4 drift(const Vec4& m, const Vec2& u, const Vec4& d, const ModelParams& p);

// Noise-free level measurement y_i = m_i / (rho * A_i).
Vec4 measure(const Vec4& m, const ModelParams& p);

// Controlled variables: levels of the two bottom tanks.
Vec2 cv_output(const Vec4& m, const ModelParams& p);

// Analytic interior steady state for constant (u, d): the top tanks are
// solved first (outflow = inflow), then the bottom tanks. Throws
// std::domain_error naming the first tank whose net inflow is not positive.
Vec4 steady_state(const Vec2& u, const Vec4& d, const ModelParams& p);

// Analytic Jacobians of drift at an interior point. Rejects m_i = 0.
LinearModel linearize(const Vec4& x_s, const Vec2& u_s, const Vec4& d_s,
                      const ModelParams& p);

// Jacobian of drift with respect to the masses. Unlike linearize this
// accepts boundary states: the clamped branch m <= 0 has zero slope.
Mat4 drift_jacobian(const Vec4& m, const ModelParams& p);

// Jacobian of drift with respect to the pump flows (constant).
Mat42 input_jacobian(const ModelParams& p);

// Classical fixed-step RK4. Throws std::runtime_error (with the step index)
// if the state becomes non-finite.
template <class Vec, class Field>
Vec integrate_rk4(Field&& f, Vec x, double t0, double t1, int steps) {
  if (steps < 1) throw std::invalid_argument("integrate_rk4: steps must be >= 1");
  if (!(t1 > t0)) throw std::invalid_argument("integrate_rk4: t1 must exceed t0");
  const double h = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * h;
    const Vec k1 = f(t, x);
    const Vec k2 = f(t + 0.5 * h, Vec(x + 0.5 * h * k1));
    const Vec k3 = f(t + 0.5 * h, Vec(x + 0.5 * h * k2));
    const Vec k4 = f(t + h, Vec(x + h * k3));
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite())
      throw std::runtime_error("integrate_rk4: non-finite state at step " +
                               std::to_string(s));
  }
  return x;
}

// One control interval of the stochastic plant: Euler-Maruyama with
// dt = Ts/substeps and reflecting clamp m <- max(0, m). noise_free
// disables the diffusion term (the rng is not advanced).
Vec4 plant_interval(const Vec4& m0, const Vec2& u, const Vec4& d,
                    const ModelParams& p, double Ts, int substeps,
                    std::mt19937_64& rng, bool noise_free = false);

// Noisy level measurement y = C x + v, v ~ N(0, diag(r2)).
Vec4 measure_noisy(const Vec4& m, const ModelParams& p, std::mt19937_64& rng,
                   bool noise_free = false);

struct SimResult {
  std::vector<double> t;
  std::vector<Vec4> mass;  // states at sample instants (size N+1)
  std::vector<Vec4> y;     // measurements at sample instants (size N+1)
};

// Open-loop stochastic simulation under piecewise-constant (ZOH) input and
// disturbance schedules. N = u_schedule.size() intervals, N+1 samples.
SimResult simulate_plant(const Vec4& x0, const std::vector<Vec2>& u_schedule,
                         const std::vector<Vec4>& d_schedule,
                         const ModelParams& p, double Ts, int substeps,
                         std::uint64_t seed, bool noise_free = false);

// DC gain Cz * (-A)^{-1} * B of the linearized model.
Eigen::Matrix2d dc_gain(const LinearModel& model);

// Extract the second order form of g12 (out=0,in=1) or g21 (out=1,in=0);
// the diagonal entries have a direct first-order path and are rejected.
SecondOrderTF extract_second_order(const LinearModel& model, int out, int in);

}  // namespace qts

#endif
