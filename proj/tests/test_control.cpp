#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qts/mpc.hpp"
#include "qts/pid.hpp"
#include "qts/qp.hpp"

using namespace qts;

namespace {

// Exhaustive active-set enumeration oracle for small box QPs: every
// variable is free, at its lower bound, or at its upper bound; the unique
// KKT-consistent combination is the optimum of a strictly convex problem.
Eigen::VectorXd qp_oracle(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                          const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
  const int n = static_cast<int>(g.size());
  long combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  for (long code = 0; code < combos; ++code) {
    std::vector<int> tag(n);
    long c = code;
    for (int i = 0; i < n; ++i) {
      tag[i] = c % 3;
      c /= 3;
    }
    Eigen::VectorXd x(n);
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (tag[i] == 0)
        free.push_back(i);
      else
        x[i] = tag[i] == 1 ? lb[i] : ub[i];
    }
    const int nf = static_cast<int>(free.size());
    if (nf > 0) {
      Eigen::MatrixXd Hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int r = 0; r < nf; ++r) {
        rhs[r] = -g[free[r]];
        for (int i = 0; i < n; ++i)
          if (tag[i] != 0) rhs[r] -= H(free[r], i) * x[i];
        for (int cc = 0; cc < nf; ++cc) Hff(r, cc) = H(free[r], free[cc]);
      }
      const Eigen::VectorXd xf = Hff.llt().solve(rhs);
      for (int r = 0; r < nf; ++r) x[free[r]] = xf[r];
    }
    bool ok = true;
    const Eigen::VectorXd grad = H * x + g;
    for (int i = 0; i < n && ok; ++i) {
      if (tag[i] == 0)
        ok = x[i] >= lb[i] - 1e-9 && x[i] <= ub[i] + 1e-9;
      else if (tag[i] == 1)
        ok = grad[i] >= -1e-9;  // lower-bound multiplier nonnegative
      else
        ok = grad[i] <= 1e-9;
    }
    if (ok) return x;
  }
  throw std::logic_error("qp_oracle: no KKT point found");
}

LinearModel operating_model(const ModelParams& p, const Vec2& u_s) {
  const Vec4 x_s = steady_state(u_s, Vec4::Zero(), p);
  return linearize(x_s, u_s, Vec4::Zero(), p);
}

}  // namespace

TEST_CASE("IMC tuning hand case") {
  SecondOrderTF tf{1.0, 100.0, 10.0};
  const PidGains k = imc_tune(tf, 50.0);
  // series: Kp~ = 100/50 = 2, taui~ = min(100, 200) = 100, taud~ = 10
  // alpha = 1.1
  CHECK(k.Kp == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(k.tau_i == doctest::Approx(110.0).epsilon(1e-12));
  CHECK(k.tau_d == doctest::Approx(10.0 / 1.1).epsilon(1e-12));
  CHECK(k.T_c == 50.0);

  // slow tuning hits the 4 Tc cap on the integral time
  const PidGains slow = imc_tune(tf, 10.0);
  CHECK(slow.tau_i == doctest::Approx(40.0 * (1.0 + 10.0 / 40.0)).epsilon(1e-12));

  // tau2 = 0 degenerates to PI
  const PidGains pi = imc_tune(SecondOrderTF{2.0, 60.0, 0.0}, 50.0);
  CHECK(pi.Kp == doctest::Approx(60.0 / (2.0 * 50.0)).epsilon(1e-12));
  CHECK(pi.tau_i == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(pi.tau_d == 0.0);
}

TEST_CASE("PID at zero error holds the bias") {
  PidGains k{2.0, 100.0, 10.0, 50.0, 300.0};
  PidLoopState s;
  for (int i = 0; i < 50; ++i) {
    const double u = pid_step(s, 15.0, 15.0, k, 5.0, 160.0, 350.0);
    CHECK(u == doctest::Approx(300.0).epsilon(1e-12));
  }
  CHECK(s.integral == doctest::Approx(0.0));
}

TEST_CASE("PID saturation and anti-windup") {
  PidGains k{2.0, 100.0, 0.0, 50.0, 300.0};
  PidLoopState s;
  double u = 0.0;
  for (int i = 0; i < 10000; ++i) {
    u = pid_step(s, 10.0, 40.0, k, 5.0, 160.0, 350.0);
    CHECK(u <= 350.0);
    CHECK(u >= 160.0);
    // back-calculation keeps the integral bounded
    CHECK(std::abs(s.integral) < 1000.0);
  }
  CHECK(u == 350.0);
  // once the error flips, the loop leaves the bound within a few samples
  bool released = false;
  for (int i = 0; i < 5; ++i) {
    u = pid_step(s, 40.0, 10.0, k, 5.0, 160.0, 350.0);
    if (u < 350.0) released = true;
  }
  CHECK(released);
}

TEST_CASE("PID derivative acts on the measurement only") {
  PidGains k{2.0, 100.0, 10.0, 50.0, 300.0};
  PidLoopState s;
  // constant measurement, setpoint steps: the derivative path stays quiet
  for (int i = 0; i < 20; ++i) {
    pid_step(s, 15.0, i < 10 ? 15.0 : 20.0, k, 5.0, 0.0, 1000.0);
    CHECK(s.dfilt == 0.0);
  }
  // a measurement step does excite it
  pid_step(s, 16.0, 20.0, k, 5.0, 0.0, 1000.0);
  CHECK(s.dfilt != 0.0);
}

TEST_CASE("ZOH discretization") {
  const ModelParams p = estimated_params();
  LinearModel lm = operating_model(p, Vec2(300.0, 300.0));

  SUBCASE("integrator limit: A = 0 gives Ad = I, Bd = Ts B") {
    LinearModel pure = lm;
    pure.A.setZero();
    const DiscreteModel d = zoh_discretize(pure, 5.0);
    CHECK((d.Ad - Mat4::Identity()).norm() < 1e-12);
    CHECK((d.Bd - 5.0 * pure.B).norm() < 1e-12);
    CHECK((d.Ed - 5.0 * pure.E).norm() < 1e-12);
  }

  SUBCASE("diagonal system matches the scalar formulas") {
    LinearModel diag = lm;
    diag.A = Mat4::Zero();
    diag.A.diagonal() << -0.1, -0.02, -0.3, -0.05;
    const DiscreteModel d = zoh_discretize(diag, 5.0);
    for (int i = 0; i < 4; ++i) {
      const double a = diag.A(i, i);
      CHECK(d.Ad(i, i) == doctest::Approx(std::exp(a * 5.0)).epsilon(1e-12));
      for (int j = 0; j < 2; ++j)
        CHECK(d.Bd(i, j) == doctest::Approx((std::exp(a * 5.0) - 1.0) / a *
                                            diag.B(i, j)).epsilon(1e-10));
    }
  }

  SUBCASE("spectral mapping on the plant linearization") {
    const DiscreteModel d = zoh_discretize(lm, 5.0);
    Eigen::VectorXcd ec = lm.A.eigenvalues();
    Eigen::VectorXcd ed = d.Ad.eigenvalues();
    std::sort(ec.data(), ec.data() + 4,
              [](auto a, auto b) { return a.real() < b.real(); });
    std::sort(ed.data(), ed.data() + 4,
              [](auto a, auto b) { return a.real() < b.real(); });
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(ed[i] - std::exp(ec[i] * 5.0)) < 1e-10);
  }
}

TEST_CASE("QP hand cases") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd lb = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd ub = Eigen::VectorXd::Constant(2, 0.5);

  // unconstrained optimum (1,1) clips to the box corner
  Eigen::VectorXd g = Eigen::VectorXd::Constant(2, -1.0);
  QpResult r = qp_solve(H, g, lb, ub);
  CHECK(r.converged);
  CHECK((r.x - Eigen::VectorXd::Constant(2, 0.5)).norm() < 1e-12);
  CHECK(r.kkt_residual < 1e-8);

  // interior optimum is returned exactly
  g = Eigen::VectorXd::Constant(2, -0.2);
  r = qp_solve(H, g, lb, ub);
  CHECK((r.x - Eigen::VectorXd::Constant(2, 0.2)).norm() < 1e-12);

  // one active, one free
  Eigen::VectorXd g2(2);
  g2 << -1.0, -0.2;
  r = qp_solve(H, g2, lb, ub);
  CHECK(r.x[0] == 0.5);
  CHECK(r.x[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("QP against the enumeration oracle on random problems") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = norm(rng);
    const Eigen::MatrixXd H =
        M * M.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), lb(n), ub(n);
    for (int i = 0; i < n; ++i) {
      g[i] = 2.0 * norm(rng);
      const double a = norm(rng), b = norm(rng);
      lb[i] = std::min(a, b);
      ub[i] = std::max(a, b) + 0.1;
    }
    const QpResult r = qp_solve(H, g, lb, ub);
    const Eigen::VectorXd x_ref = qp_oracle(H, g, lb, ub);
    CHECK(r.converged);
    CHECK((r.x - x_ref).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(r.kkt_residual < 1e-8);
    CHECK(qp_kkt_residual(H, g, lb, ub, r.x) < 1e-8);

    // warm start at the solution terminates immediately with the same point
    const QpResult w = qp_solve(H, g, lb, ub, &r.x);
    CHECK(w.iterations <= 2);
    CHECK((w.x - r.x).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("LMPC holds the operating point") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const LinearModel lm = operating_model(p, u_s);
  const Vec2 z_s = (lm.Cz * lm.x_s);

  MpcConfig cfg = paper_mpc_config();
  LmpcController mpc(lm, p, cfg);
  mpc.set_previous_input(u_s);

  GaussianBelief dev;
  dev.mean.setZero();
  dev.cov = Mat8::Identity();
  OcpSolution sol;
  const Vec2 u = mpc.step(dev, {z_s}, &sol);
  CHECK((u - u_s).norm() < 1e-9);
  CHECK(sol.converged);
  CHECK(sol.kkt_residual < 1e-8);
}

TEST_CASE("LMPC move suppression freezes the input") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const LinearModel lm = operating_model(p, u_s);
  const Vec2 z_s = (lm.Cz * lm.x_s);

  MpcConfig cfg = paper_mpc_config();
  cfg.S = 1e9 * Eigen::Matrix2d::Identity();
  cfg.Nc = 40;
  LmpcController mpc(lm, p, cfg);
  mpc.set_previous_input(u_s);

  GaussianBelief dev;
  dev.mean.setZero();
  dev.cov = Mat8::Identity();
  const Vec2 u = mpc.step(dev, {z_s + Vec2(3.0, -2.0)});
  CHECK((u - u_s).norm() < 1e-3);
}

TEST_CASE("LMPC small horizon against a simulation-built QP oracle") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const LinearModel lm = operating_model(p, u_s);
  const Vec2 z_s = (lm.Cz * lm.x_s);
  const DiscreteModel dm = zoh_discretize(lm, 5.0);

  MpcConfig cfg;
  cfg.Q = 10.0 * Eigen::Matrix2d::Identity();
  cfg.S = Eigen::Matrix2d::Identity();
  cfg.Nc = 2;
  cfg.u_lb = -1e6;  // effectively unconstrained
  cfg.u_ub = 1e6;

  GaussianBelief dev;
  dev.mean.setZero();
  dev.mean.head<4>() << 50.0, -30.0, 20.0, 10.0;   // state deviation
  dev.mean.tail<4>() << 1.0, 0.0, -0.5, 0.0;       // disturbance estimate
  dev.cov = Mat8::Identity();

  const Vec2 zbar = z_s + Vec2(1.0, -0.5);
  const Vec2 u_prev_dev(4.0, -3.0);

  // objective of the stacked deviation input, evaluated by plain rollout
  auto phi = [&](const Eigen::Vector4d& Uvec) {
    Vec4 x = dev.mean.head<4>();
    const Vec4 d = dev.mean.tail<4>();
    double obj = 0.0;
    Vec2 prev = u_prev_dev;
    for (int k = 0; k < 2; ++k) {
      const Vec2 uk = Uvec.segment<2>(2 * k);
      x = dm.Ad * x + dm.Bd * uk + dm.Ed * d;
      const Vec2 z = lm.Cz * x + z_s;
      obj += (z - zbar).dot(cfg.Q * (z - zbar));
      obj += (uk - prev).dot(cfg.S * (uk - prev));
      prev = uk;
    }
    return obj;
  };
  // phi is quadratic, so finite differences with unit steps are exact
  Eigen::Matrix4d Hn;
  Eigen::Vector4d gn;
  const double f0 = phi(Eigen::Vector4d::Zero());
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      Eigen::Vector4d ei = Eigen::Vector4d::Zero(), ej = Eigen::Vector4d::Zero(),
                      eij = Eigen::Vector4d::Zero();
      ei[i] = 1.0;
      ej[j] = 1.0;
      eij[i] += 1.0;
      eij[j] += 1.0;
      Hn(i, j) = phi(eij) - phi(ei) - phi(ej) + f0;
    }
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d ei = Eigen::Vector4d::Zero();
    ei[i] = 1.0;
    gn[i] = phi(ei) - f0 - 0.5 * Hn(i, i);
  }
  const Eigen::Vector4d u_ref = Hn.llt().solve(-gn);

  LmpcController mpc(lm, p, cfg);
  mpc.set_previous_input(u_s + u_prev_dev);
  OcpSolution sol;
  mpc.step(dev, {zbar, zbar}, &sol);
  REQUIRE(sol.u_plan.size() == 2);
  for (int k = 0; k < 2; ++k)
    CHECK((sol.u_plan[k] - u_s - Vec2(u_ref.segment<2>(2 * k)))
              .lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("NMPC holds the operating point") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const Vec4 x_s = steady_state(u_s, Vec4::Zero(), p);
  const Vec2 z_s = cv_output(x_s, p);

  MpcConfig cfg = paper_mpc_config();
  cfg.Nc = 40;
  NmpcController mpc(p, cfg, u_s);

  GaussianBelief b;
  b.mean.head<4>() = x_s;
  b.mean.tail<4>().setZero();
  b.cov = Mat8::Identity();
  OcpSolution sol;
  const Vec2 u = mpc.step(b, {z_s}, &sol);
  CHECK((u - u_s).norm() < 1e-6);
  CHECK(sol.converged);
}

TEST_CASE("NMPC agrees with LMPC near the operating point") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const LinearModel lm = operating_model(p, u_s);
  const Vec2 z_s = (lm.Cz * lm.x_s);

  MpcConfig cfg = paper_mpc_config();
  cfg.Nc = 40;

  LmpcController lmpc(lm, p, cfg);
  lmpc.set_previous_input(u_s);
  NmpcController nmpc(p, cfg, u_s);

  const Vec2 zbar = z_s + Vec2(0.2, 0.1);

  GaussianBelief dev;
  dev.mean.setZero();
  dev.cov = Mat8::Identity();
  const Vec2 u_l = lmpc.step(dev, {zbar});

  GaussianBelief abs;
  abs.mean.head<4>() = lm.x_s;
  abs.mean.tail<4>().setZero();
  abs.cov = Mat8::Identity();
  const Vec2 u_n = nmpc.step(abs, {zbar});

  CHECK((u_n - u_l).norm() < 0.01 * (u_l - u_s).norm());
}

TEST_CASE("NMPC respects the input bounds on a large setpoint change") {
  const ModelParams p = estimated_params();
  const Vec2 u_s(300.0, 300.0);
  const Vec4 x_s = steady_state(u_s, Vec4::Zero(), p);
  const Vec2 z_s = cv_output(x_s, p);

  MpcConfig cfg = paper_mpc_config();
  cfg.Nc = 40;
  NmpcController mpc(p, cfg, u_s);

  GaussianBelief b;
  b.mean.head<4>() = x_s;
  b.mean.tail<4>().setZero();
  b.cov = Mat8::Identity();
  OcpSolution sol;
  mpc.step(b, {z_s + Vec2(10.0, 10.0)}, &sol);
  for (const auto& u : sol.u_plan) {
    CHECK(u[0] >= cfg.u_lb - 1e-9);
    CHECK(u[0] <= cfg.u_ub + 1e-9);
    CHECK(u[1] >= cfg.u_lb - 1e-9);
    CHECK(u[1] <= cfg.u_ub + 1e-9);
  }
  CHECK(sol.iterations >= 1);
}
