#ifndef QTS_SYSID_HPP
#define QTS_SYSID_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qts/dynamics.hpp"
#include "qts/kalman.hpp"
#include "qts/model.hpp"

namespace qts {

// Uniformly sampled input-output record, CSV schema t,y1..y4,u1,u2.
struct Dataset {
  std::vector<double> t;
  std::vector<Vec4> Y;
  std::vector<Vec2> U;

  std::size_t size() const { return t.size(); }
  double sample_time() const;
  void validate() const;
};

Dataset load_dataset_csv(const std::string& path);
void save_dataset_csv(const Dataset& ds, const std::string& path);

// Free parameters of the estimation problem. rho and g_a are never free.
enum class ParamId {
  a1, a2, a3, a4,
  A1, A2, A3, A4,
  gamma1, gamma2,
  sigma1, sigma2, sigma3, sigma4,
};

double get_param(const ModelParams& p, ParamId id);
void set_param(ModelParams& p, ParamId id, double value);

struct EstimationProblem {
  Dataset data;
  std::vector<ParamId> free_params;
  ModelParams theta0;
};

struct NllOptions {
  int rk_steps = 10;
  // When set, the filter starts from this belief instead of the default
  // steady-state belief for the first input.
  bool has_initial_belief = false;
  GaussianBelief initial_belief{};
};

// Single innovation contribution ln det Re + e' Re^{-1} e (without the
// 1/2 and the constant), shared by the likelihood and its tests.
double nll_term(const Eigen::Ref<const Eigen::VectorXd>& e,
                const Eigen::Ref<const Eigen::MatrixXd>& Re);

// Negative log-likelihood of the innovations of the augmented CD-EKF:
//   V_ML = 1/2 sum_k (ln det Re_k + e_k' Re_k^{-1} e_k) + N n_y/2 ln 2 pi.
// Filter divergence yields +inf.
double negative_log_likelihood(const ModelParams& theta, const Dataset& ds,
                               const NllOptions& opt = {});

struct EstimateOptions {
  int max_evals = 2000;          // per start
  double simplex_tol = 1e-6;     // diameter in transformed coordinates
  int multistart = 3;            // perturbed restarts of theta0
  double start_spread = 0.10;    // relative perturbation of extra starts
  std::uint64_t seed = 1;        // for the start perturbations
  NllOptions nll{};
};

struct EstimateResult {
  ModelParams theta;
  double vml = 0.0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> best_trace;  // best objective after each improvement
};

// Derivative-free Nelder-Mead minimization of V_ML in transformed
// coordinates (log for a/A/sigma, logit for gamma).
EstimateResult estimate_parameters(const EstimationProblem& problem,
                                   const EstimateOptions& opt = {});

// Averaged normalized RMS fit percentage between measured and simulated
// levels; 100 for a perfect fit, 0 for the constant-mean predictor.
// Throws std::domain_error if a measured channel is constant.
double goodness_of_fit(const Dataset& ds, const std::vector<Vec4>& simulated);

// Deterministic (noise-free) level trajectory for the dataset's input
// schedule, for goodness-of-fit evaluation. Output size = ds.size().
std::vector<Vec4> simulate_levels_deterministic(const Vec4& x0,
                                                const Dataset& ds,
                                                const ModelParams& p,
                                                int rk_steps = 10);

// Piecewise-constant random step schedule per pump: hold durations uniform
// over [hold_min, hold_max] control intervals, levels uniform over
// [level_min, level_max].
std::vector<Vec2> generate_excitation(std::uint64_t seed, int n_samples,
                                      int hold_min, int hold_max,
                                      double level_min, double level_max);

}  // namespace qts

#endif
