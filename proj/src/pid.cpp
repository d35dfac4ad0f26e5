#include "qts/pid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qts {

PidGains imc_tune(const SecondOrderTF& tf, double T_c) {
  if (!(T_c > 0.0)) throw std::invalid_argument("imc_tune: T_c must be positive");
  if (tf.k == 0.0) throw std::invalid_argument("imc_tune: zero-gain process is untunable");
  if (!(tf.tau1 >= tf.tau2 && tf.tau2 >= 0.0 && tf.tau1 > 0.0))
    throw std::invalid_argument("imc_tune: invalid time constants");
  const double Kp_s = tf.tau1 / (tf.k * T_c);
  const double taui_s = std::min(tf.tau1, 4.0 * T_c);
  const double taud_s = tf.tau2;
  const double alpha = 1.0 + taud_s / taui_s;
  PidGains g;
  g.Kp = Kp_s * alpha;
  g.tau_i = taui_s * alpha;
  g.tau_d = taud_s / alpha;
  g.T_c = T_c;
  return g;
}

double pid_step(PidLoopState& s, double y, double zbar, const PidGains& k,
                double Ts, double lb, double ub) {
  if (!(lb < ub)) throw std::invalid_argument("pid_step: lb must be < ub");
  const double e = zbar - y;
  if (!s.has_prev) {
    s.y_prev = y;
    s.e_prev = e;
    s.has_prev = true;
  }

  // Derivative on the measurement through a first order filter, Nf = 10.
  constexpr double Nf = 10.0;
  double d = 0.0;
  if (k.tau_d > 0.0) {
    const double den = k.tau_d + Nf * Ts;
    d = (k.tau_d / den) * s.dfilt -
        (k.Kp * k.tau_d * Nf / den) * (y - s.y_prev);
  }
  s.dfilt = d;

  const double u_raw = k.u_bias + k.Kp * e + s.integral + d;
  const double u = std::clamp(u_raw, lb, ub);

  const double tau_t = k.tau_d > 0.0 ? std::sqrt(k.tau_i * k.tau_d) : k.tau_i;
  s.integral += k.Kp * Ts / k.tau_i * 0.5 * (e + s.e_prev) +
                Ts / tau_t * (u - u_raw);
  s.y_prev = y;
  s.e_prev = e;
  return u;
}

}  // namespace qts
