#ifndef QTS_PID_HPP
#define QTS_PID_HPP

#include "qts/dynamics.hpp"

namespace qts {

struct PidGains {
  double Kp = 0.0;     // [(cm^3/s)/cm]
  double tau_i = 1.0;  // [s]
  double tau_d = 0.0;  // [s]
  double T_c = 0.0;    // IMC tuning constant [s]
  double u_bias = 0.0; // [cm^3/s]
};

// Skogestad IMC rules for the second order process (18):
//   Kp~ = tau1/(k Tc), taui~ = min(tau1, 4 Tc), taud~ = tau2,
// converted from series to parallel form with alpha = 1 + taud~/taui~.
PidGains imc_tune(const SecondOrderTF& tf, double T_c);

struct PidLoopState {
  double integral = 0.0;    // integral contribution [cm^3/s]
  double dfilt = 0.0;       // filtered derivative contribution [cm^3/s]
  double y_prev = 0.0;
  double e_prev = 0.0;
  bool has_prev = false;
};

// One step of the discrete parallel-form PID: proportional on the error,
// trapezoidal integral, filtered derivative on the measurement only
// (filter coefficient N_f = 10), saturation to [lb, ub] and
// back-calculation anti-windup with tracking time sqrt(tau_i*tau_d)
// (tau_i when tau_d = 0).
double pid_step(PidLoopState& s, double y, double zbar, const PidGains& k,
                double Ts, double lb, double ub);

}  // namespace qts

#endif
