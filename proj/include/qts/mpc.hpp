#ifndef QTS_MPC_HPP
#define QTS_MPC_HPP

#include <vector>

#include "qts/dynamics.hpp"
#include "qts/kalman.hpp"
#include "qts/qp.hpp"

namespace qts {

struct DiscreteModel {
  Mat4 Ad;
  Mat42 Bd;
  Mat4 Ed;
  double Ts = 0.0;
};

// Exact zero-order-hold discretization via the augmented matrix
// exponential; the disturbance input is held like the control input.
DiscreteModel zoh_discretize(const LinearModel& model, double Ts);

struct MpcConfig {
  Eigen::Matrix2d Q = Eigen::Matrix2d::Identity();  // CV tracking weight
  Eigen::Matrix2d S = Eigen::Matrix2d::Identity();  // input move weight
  int Nc = 160;
  double Ts = 5.0;
  double u_lb = 160.0;
  double u_ub = 350.0;
};

// Eq.-style paper tuning: Q = diag(10,10), S = diag(1,1), Nc = 160, Ts = 5.
MpcConfig paper_mpc_config();

struct OcpSolution {
  std::vector<Vec2> u_plan;      // absolute inputs over the horizon
  std::vector<Vec2> z_pred;      // predicted CVs at k = 1..Nc
  double objective = 0.0;
  int iterations = 0;            // QP or SQP iterations
  double kkt_residual = 0.0;
  bool converged = true;
};

// Linear MPC: condensed box-constrained QP over the stacked input
// deviations, with the estimated disturbance held constant over the
// horizon and the first move penalized against the last applied input.
class LmpcController {
 public:
  LmpcController(const LinearModel& model, const ModelParams& params,
                 const MpcConfig& cfg);

  // belief is the CD-KF deviation belief ([X; D] deviations from the
  // operating point); zbar is the absolute setpoint preview, padded with
  // its last value when shorter than the horizon.
  Vec2 step(const GaussianBelief& belief, const std::vector<Vec2>& zbar,
            OcpSolution* sol = nullptr);

  void set_previous_input(const Vec2& u) { u_prev_ = u; }
  const MpcConfig& config() const { return cfg_; }

 private:
  LinearModel model_;
  MpcConfig cfg_;
  Vec2 z_s_;                   // operating CV levels
  Vec2 u_prev_;
  Eigen::MatrixXd Gamma_;      // Z response to stacked inputs (2Nc x 2Nc)
  Eigen::MatrixXd PhiX_;       // Z response to the initial state (2Nc x 4)
  Eigen::MatrixXd PhiD_;       // Z response to the held disturbance (2Nc x 4)
  Eigen::MatrixXd Lambda_;     // first-difference operator (2Nc x 2Nc)
  Eigen::MatrixXd H_;          // condensed Hessian
  Eigen::VectorXd u_warm_;
  bool has_warm_ = false;
};

// Nonlinear MPC: direct multiple shooting with the continuity constraints
// condensed by forward sensitivity propagation, Gauss-Newton Hessian, and
// the box QP solved per SQP iteration. Warm-started from the previous
// solution shifted one step.
class NmpcController {
 public:
  NmpcController(const ModelParams& model, const MpcConfig& cfg,
                 const Vec2& u_initial);

  // belief is the absolute augmented CD-EKF belief.
  Vec2 step(const GaussianBelief& belief, const std::vector<Vec2>& zbar,
            OcpSolution* sol = nullptr);

  void set_previous_input(const Vec2& u) { u_prev_ = u; }
  const MpcConfig& config() const { return cfg_; }

  static constexpr int kRk4Substeps = 10;
  static constexpr int kMaxSqpIterations = 30;

 private:
  ModelParams model_;
  MpcConfig cfg_;
  Vec2 u_prev_;
  std::vector<Vec2> u_warm_;
  Eigen::MatrixXd move_hessian_;  // Lambda' Sbar Lambda, constant

  double rollout_objective(const std::vector<Vec2>& U, const Vec4& x0,
                           const Vec4& dhat,
                           const std::vector<Vec2>& zbar) const;
};

// Shared helper: pad (or truncate) a setpoint preview to exactly Nc entries.
std::vector<Vec2> pad_horizon(const std::vector<Vec2>& zbar, int Nc);

}  // namespace qts

#endif
