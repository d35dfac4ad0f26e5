#include "qts/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qts {

Vec2 SetpointSchedule::at(double t) const {
  if (breakpoints.empty())
    throw std::invalid_argument("SetpointSchedule: no breakpoints");
  Vec2 z = breakpoints.front().second;
  for (const auto& [time, zbar] : breakpoints) {
    if (time > t) break;
    z = zbar;
  }
  return z;
}

void SetpointSchedule::validate(bool staggered_required) const {
  if (breakpoints.empty())
    throw std::invalid_argument("SetpointSchedule: no breakpoints");
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i].first > breakpoints[i - 1].first))
      throw std::invalid_argument("SetpointSchedule: times must be strictly increasing");
    if (staggered_required) {
      const Vec2 prev = breakpoints[i - 1].second;
      const Vec2 cur = breakpoints[i].second;
      const bool step1 = cur[0] != prev[0];
      const bool step2 = cur[1] != prev[1];
      if (step1 && step2)
        throw std::invalid_argument(
            "SetpointSchedule: simultaneous steps on both tanks at t = " +
            std::to_string(breakpoints[i].first));
    }
  }
}

std::string controller_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::pid: return "pid";
    case ControllerKind::lmpc: return "lmpc";
    case ControllerKind::nmpc: return "nmpc";
  }
  throw std::invalid_argument("controller_name: bad kind");
}

ControllerKind controller_from_name(const std::string& name) {
  if (name == "pid") return ControllerKind::pid;
  if (name == "lmpc") return ControllerKind::lmpc;
  if (name == "nmpc") return ControllerKind::nmpc;
  throw std::invalid_argument("unknown controller: " + name +
                              " (expected pid, lmpc or nmpc)");
}

RunRecord run_closed_loop(const RunSpec& spec) {
  spec.plant_theta.validate();
  spec.model_theta.validate();
  spec.schedule.validate();
  if (spec.kind != ControllerKind::pid && spec.mpc.Ts != spec.Ts)
    throw std::invalid_argument("run_closed_loop: controller Ts differs from loop Ts");

  const int n_intervals = static_cast<int>(std::llround(spec.duration / spec.Ts));
  if (n_intervals < 1)
    throw std::invalid_argument("run_closed_loop: duration shorter than one interval");

  // Model-side operating point for the linear designs and the filters.
  const Vec4 x_s = steady_state(spec.u_s, Vec4::Zero(), spec.model_theta);
  const LinearModel lm = linearize(x_s, spec.u_s, Vec4::Zero(), spec.model_theta);
  const Vec4 y_s = measure(x_s, spec.model_theta);
  const Vec2 z_s = cv_output(x_s, spec.model_theta);

  // Controllers.
  PidLoopState pid_a, pid_b;  // a: (z1, u2), b: (z2, u1)
  PidGains gains_a, gains_b;
  std::optional<LmpcController> lmpc;
  std::optional<NmpcController> nmpc;
  if (spec.kind == ControllerKind::pid) {
    gains_a = imc_tune(extract_second_order(lm, 0, 1), spec.pid_Tc);
    gains_a.u_bias = spec.u_s[1];
    gains_b = imc_tune(extract_second_order(lm, 1, 0), spec.pid_Tc);
    gains_b.u_bias = spec.u_s[0];
  } else if (spec.kind == ControllerKind::lmpc) {
    lmpc.emplace(lm, spec.model_theta, spec.mpc);
    lmpc->set_previous_input(spec.u_s);
  } else {
    nmpc.emplace(spec.model_theta, spec.mpc, spec.u_s);
  }

  // Estimator: CD-KF (deviation form) for the LMPC, CD-EKF otherwise.
  const bool use_kf = spec.kind == ControllerKind::lmpc;
  GaussianBelief belief;
  if (use_kf) {
    belief.mean.setZero();
    belief.cov = initial_belief(spec.u_s, spec.model_theta).cov;
  } else {
    belief = initial_belief(spec.u_s, spec.model_theta);
  }

  std::mt19937_64 rng(spec.seed);
  Vec4 x_plant = steady_state(spec.u_s, Vec4::Zero(), spec.plant_theta);

  RunRecord rec;
  rec.controller = controller_name(spec.kind);
  rec.seed = spec.seed;
  rec.Ts = spec.Ts;
  rec.rows.reserve(n_intervals + 1);

  for (int k = 0; k <= n_intervals; ++k) {
    const double t = k * spec.Ts;
    const Vec4 y = measure_noisy(x_plant, spec.plant_theta, rng, spec.noise_free);

    if (use_kf)
      belief = kf_measurement_update(belief, y - y_s, lm, spec.model_theta).first;
    else
      belief = ekf_measurement_update(belief, y, spec.model_theta).first;

    const Vec2 zbar_now = spec.schedule.at(t);
    Vec2 u;
    if (spec.kind == ControllerKind::pid) {
      u[1] = pid_step(pid_a, y[0], zbar_now[0], gains_a, spec.Ts, spec.mpc.u_lb,
                      spec.mpc.u_ub);
      u[0] = pid_step(pid_b, y[1], zbar_now[1], gains_b, spec.Ts, spec.mpc.u_lb,
                      spec.mpc.u_ub);
    } else {
      std::vector<Vec2> preview(spec.mpc.Nc);
      for (int j = 0; j < spec.mpc.Nc; ++j)
        preview[j] = spec.schedule.at(t + (j + 1) * spec.Ts);
      u = use_kf ? lmpc->step(belief, preview) : nmpc->step(belief, preview);
    }

    RunRecord::Row row;
    row.t = t;
    row.zbar = zbar_now;
    row.y = y;
    row.u = u;
    if (use_kf) {
      row.xhat = x_s + belief.mean.head<4>();
      row.dhat = belief.mean.tail<4>();
    } else {
      row.xhat = belief.mean.head<4>();
      row.dhat = belief.mean.tail<4>();
    }
    rec.rows.push_back(row);

    if (k < n_intervals) {
      x_plant = plant_interval(x_plant, u, spec.d_star, spec.plant_theta,
                               spec.Ts, spec.plant_substeps, rng,
                               spec.noise_free);
      if (use_kf)
        belief = kf_time_update(belief, u - spec.u_s, spec.Ts, lm,
                                spec.model_theta);
      else
        belief = ekf_time_update(belief, u, spec.Ts, spec.model_theta);
    }
  }
  return rec;
}

PerformanceReport compute_metrics(const RunRecord& record) {
  if (record.rows.empty())
    throw std::invalid_argument("compute_metrics: empty record");
  PerformanceReport rep;
  rep.n = record.rows.size();
  rep.m = record.rows.size();
  for (const auto& row : record.rows) {
    const Vec2 e = row.zbar - row.y.head<2>();
    rep.nise += e.squaredNorm();
    rep.niae += e.lpNorm<1>();
  }
  rep.nise /= static_cast<double>(rep.n);
  rep.niae /= static_cast<double>(rep.n);
  if (rep.m >= 2) {
    double s = 0.0;
    for (std::size_t j = 1; j < record.rows.size(); ++j)
      s += (record.rows[j].u - record.rows[j - 1].u).squaredNorm();
    rep.nisdu = s / static_cast<double>(rep.m - 1);
  }
  return rep;
}

Protocol paper_protocol() {
  Protocol proto;
  proto.base.plant_theta = estimated_params();
  proto.base.model_theta = with_filter_tuning(estimated_params());
  proto.base.mpc = paper_mpc_config();
  proto.base.pid_Tc = 50.0;
  proto.base.u_s = Vec2(300.0, 300.0);
  proto.base.Ts = 5.0;
  proto.base.duration = 3000.0;

  const Vec2 z_s = cv_output(
      steady_state(proto.base.u_s, Vec4::Zero(), proto.base.plant_theta),
      proto.base.plant_theta);
  auto step = [&](double dz1, double dz2) {
    return Vec2(z_s[0] + dz1, z_s[1] + dz2);
  };
  proto.base.schedule.breakpoints = {
      {0.0, step(0.0, 0.0)},      {250.0, step(2.0, 0.0)},
      {700.0, step(2.0, 2.0)},    {1250.0, step(-1.5, 2.0)},
      {1700.0, step(-1.5, -2.0)}, {2300.0, step(1.0, -2.0)},
  };
  proto.base.schedule.validate(/*staggered_required=*/true);
  proto.schedule = proto.base.schedule;
  return proto;
}

std::vector<ComparisonRow> compare(const std::vector<RunRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("compare: need at least one record");
  std::vector<ComparisonRow> rows;
  for (const auto& rec : records)
    rows.push_back({rec.controller, compute_metrics(rec)});
  return rows;
}

std::string comparison_text(const std::vector<ComparisonRow>& rows) {
  char buf[160];
  std::string out = "Control   NISE       NIAE       NISdU\n";
  for (const auto& r : rows) {
    if (r.report.nisdu)
      std::snprintf(buf, sizeof buf, "%-8s %10.3f %10.3f %10.3f\n",
                    r.controller.c_str(), r.report.nise, r.report.niae,
                    *r.report.nisdu);
    else
      std::snprintf(buf, sizeof buf, "%-8s %10.3f %10.3f %10s\n",
                    r.controller.c_str(), r.report.nise, r.report.niae, "-");
    out += buf;
  }
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  char buf[160];
  std::string out = "controller,nise,niae,nisdu\n";
  for (const auto& r : rows) {
    if (r.report.nisdu)
      std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.3f\n",
                    r.controller.c_str(), r.report.nise, r.report.niae,
                    *r.report.nisdu);
    else
      std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,\n", r.controller.c_str(),
                    r.report.nise, r.report.niae);
    out += buf;
  }
  return out;
}

void save_run_record(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run record: " + path);
  out << "t,zbar1,zbar2,y1,y2,y3,y4,u1,u2,"
         "xhat1,xhat2,xhat3,xhat4,dhat1,dhat2,dhat3,dhat4\n";
  char buf[512];
  for (const auto& r : record.rows) {
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.t, r.zbar[0], r.zbar[1], r.y[0], r.y[1], r.y[2], r.y[3],
                  r.u[0], r.u[1], r.xhat[0], r.xhat[1], r.xhat[2], r.xhat[3],
                  r.dhat[0], r.dhat[1], r.dhat[2], r.dhat[3]);
    out << buf;
  }
  nlohmann::json meta;
  meta["controller"] = record.controller;
  meta["seed"] = record.seed;
  meta["Ts"] = record.Ts;
  std::ofstream mout(path + ".meta.json");
  if (!mout) throw std::runtime_error("cannot write metadata for: " + path);
  mout << meta.dump(2) << "\n";
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run record: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,zbar1", 0) != 0)
    throw std::runtime_error("run record missing header: " + path);
  RunRecord rec;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 17> v{};
    char comma;
    for (int i = 0; i < 17; ++i) {
      if (!(ss >> v[i]))
        throw std::runtime_error("malformed run record row: " + line);
      if (i < 16) ss >> comma;
    }
    RunRecord::Row r;
    r.t = v[0];
    r.zbar = Vec2(v[1], v[2]);
    r.y = Vec4(v[3], v[4], v[5], v[6]);
    r.u = Vec2(v[7], v[8]);
    r.xhat = Vec4(v[9], v[10], v[11], v[12]);
    r.dhat = Vec4(v[13], v[14], v[15], v[16]);
    rec.rows.push_back(r);
  }
  std::ifstream min(path + ".meta.json");
  if (min) {
    nlohmann::json meta = nlohmann::json::parse(min);
    rec.controller = meta.value("controller", "");
    rec.seed = meta.value("seed", std::uint64_t{0});
    rec.Ts = meta.value("Ts", 0.0);
  }
  return rec;
}

}  // namespace qts
