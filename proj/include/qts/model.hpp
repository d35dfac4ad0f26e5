#ifndef QTS_MODEL_HPP
#define QTS_MODEL_HPP

#include <array>
#include <string>

namespace qts {

// Physical parameters of the quadruple tank system plus the stochastic
// model coefficients. Units are fixed: mass in g, length in cm, time in s.
struct ModelParams {
  std::array<double, 4> a{};        // outlet cross sections [cm^2]
  std::array<double, 4> A{};        // tank cross sections [cm^2]
  std::array<double, 2> gamma{};    // valve fractions, in (0,1)
  double rho = 1.0;                 // water density [g/cm^3]
  double g_a = 981.0;               // gravity [cm/s^2]
  std::array<double, 4> sigma{};    // state diffusion [g/sqrt(s)]
  std::array<double, 4> sigma_d{};  // disturbance diffusion [cm^3/(s*sqrt(s))]
  std::array<double, 4> r2{};       // measurement noise variances [cm^2]

  // Throws std::invalid_argument on any violated bound.
  void validate() const;
};

// Nominal parameters: a_i = 1.131, A_i = 380.133, gamma_j = 0.35.
// sigma = 0 (deterministic plant), measurement variances from the
// filter-tuning preset.
ModelParams nominal_params();

// Identified parameters (a, A, gamma, sigma per the estimation run).
ModelParams estimated_params();

// Overlay of the filter-tuning diffusion coefficients and measurement
// noise variances onto an existing parameter set.
ModelParams with_filter_tuning(ModelParams p);

// Resolve "nominal", "estimated" or "estimated+tuning" by name.
ModelParams params_preset(const std::string& name);

// JSON (de)serialization; load_params validates.
std::string params_to_json(const ModelParams& p);
ModelParams params_from_json(const std::string& text);
ModelParams load_params_file(const std::string& path);
void save_params_file(const ModelParams& p, const std::string& path);

}  // namespace qts

#endif
