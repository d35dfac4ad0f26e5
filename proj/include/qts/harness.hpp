#ifndef QTS_HARNESS_HPP
#define QTS_HARNESS_HPP

#include <optional>
#include <string>
#include <vector>

#include "qts/dynamics.hpp"
#include "qts/kalman.hpp"
#include "qts/mpc.hpp"
#include "qts/pid.hpp"

namespace qts {

// Piecewise-constant setpoint trajectory for the two bottom tanks.
struct SetpointSchedule {
  std::vector<std::pair<double, Vec2>> breakpoints;  // (time, zbar)

  Vec2 at(double t) const;
  void validate(bool staggered_required = false) const;
};

enum class ControllerKind { pid, lmpc, nmpc };

std::string controller_name(ControllerKind k);
ControllerKind controller_from_name(const std::string& name);

struct RunSpec {
  ModelParams plant_theta;       // simulated plant truth
  ModelParams model_theta;       // controller / estimator model (with tuning)
  ControllerKind kind = ControllerKind::pid;
  MpcConfig mpc = paper_mpc_config();
  double pid_Tc = 50.0;
  SetpointSchedule schedule;
  Vec2 u_s = Vec2(300.0, 300.0); // operating point inputs
  Vec4 d_star = Vec4::Zero();    // constant unmodeled plant inflow
  double duration = 3000.0;      // [s]
  double Ts = 5.0;
  int plant_substeps = 10;
  std::uint64_t seed = 0;
  bool noise_free = false;
};

struct RunRecord {
  struct Row {
    double t;
    Vec2 zbar;
    Vec4 y;
    Vec2 u;
    Vec4 xhat;
    Vec4 dhat;
  };
  std::vector<Row> rows;
  std::string controller;
  std::uint64_t seed = 0;
  double Ts = 0.0;
};

struct PerformanceReport {
  double nise = 0.0;    // [cm^2]
  double niae = 0.0;    // [cm]
  std::optional<double> nisdu;  // [(cm^3/s)^2], absent when M < 2
  std::size_t n = 0;
  std::size_t m = 0;
};

// Closed-loop execution of simulated plant + estimator + controller.
// Per sample: measure, estimator measurement update, controller step with
// setpoint preview, apply the input over [t, t+Ts), estimator time update.
RunRecord run_closed_loop(const RunSpec& spec);

PerformanceReport compute_metrics(const RunRecord& record);

// The canned comparison scenario: staggered setpoint steps around the
// operating point, bounds [160, 350], Tc = 50, Q/S/Nc per the MPC tuning.
struct Protocol {
  SetpointSchedule schedule;
  RunSpec base;  // everything except the controller kind
};
Protocol paper_protocol();

struct ComparisonRow {
  std::string controller;
  PerformanceReport report;
};

std::vector<ComparisonRow> compare(const std::vector<RunRecord>& records);
std::string comparison_text(const std::vector<ComparisonRow>& rows);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

// CSV persistence: t,zbar1,zbar2,y1..y4,u1,u2,xhat1..xhat4,dhat1..dhat4
// plus a JSON sidecar (<path>.meta.json) with controller id, seed and Ts.
void save_run_record(const RunRecord& record, const std::string& path);
RunRecord load_run_record(const std::string& path);

}  // namespace qts

#endif
